"""Inner maximisation ``max_{x' in B_eps^p(x)} loss(f(x'), y)`` over l_p balls, p in {2, inf}."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import INF, dual_exponent, lp_ball_project, lp_norm
from .network import (Network, loss_grad_input, loss_value, lipschitz_bound,
                      margin_grad_input)
from .rng import StreamKey, as_key


@dataclass(frozen=True)
class PerturbationSet:
    p: float
    eps: float
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        p = float(self.p)
        if p not in (2.0, INF):
            raise ValueError(f"perturbation sets support p in {{2, inf}}, got {self.p}")
        if not self.eps >= 0:
            raise ValueError("eps must be >= 0")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eps", float(self.eps))

    def contains(self, x, x_adv, tol=1e-9) -> bool:
        return lp_norm(np.asarray(x_adv) - np.asarray(x), self.p) <= self.eps + tol

    def project(self, v, x):
        return lp_ball_project(v, x, self.p, self.eps)


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 40
    step_size: Optional[float] = None
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")

    def resolved_step(self, eps: float) -> float:
        return self.step_size if self.step_size is not None else 2.5 * eps / self.steps


@dataclass(frozen=True)
class AttackResult:
    x_adv: np.ndarray
    loss_achieved: float
    method: str
    clean_loss: float
    zero_gradient: bool = False
    resolution: int = 0


def _check_x(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"x must have shape ({net.input_dim},), got {x.shape}")
    return x


def _project_rows(V, x, p, eps):
    D = V - x[None, :]
    if p == INF:
        return x[None, :] + np.clip(D, -eps, eps)
    norms = np.sqrt((D * D).sum(axis=1))
    scale = np.where(norms > eps, eps / np.where(norms > 0, norms, 1.0), 1.0)
    return x[None, :] + D * scale[:, None]


def random_start(x, pset: PerturbationSet, key: StreamKey):
    """Uniform draw from the ball (per-restart stream)."""
    gen = key.generator()
    d = x.shape[0]
    if pset.p == INF:
        return x + gen.uniform(-pset.eps, pset.eps, d)
    direction = gen.standard_normal(d)
    direction /= max(np.linalg.norm(direction), 1e-300)
    radius = pset.eps * gen.uniform() ** (1.0 / d)
    return x + radius * direction


def _ascent_direction(net, X, y, loss):
    # ramp losses are nonincreasing in the margin: descend the margin so that
    # flat regions of the ramp do not stall the attack
    if getattr(loss, "margin_monotone", False):
        return -margin_grad_input(net, X, np.full(X.shape[0], y))
    return loss_grad_input(net, X, np.full(X.shape[0], y), loss)


def pgd_attack(net: Network, x, y: int, pset: PerturbationSet, loss,
               cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Projected gradient ascent with random starts; returns the best iterate seen.

    The clean point is always a candidate. Restart ``r`` draws its start from
    the stream ``seed / ("restart", r)``, so adding restarts or steps (at a
    fixed ``step_size``) never lowers the result.
    """
    x = _check_x(net, x)
    clean = loss_value(net, x, y, loss)
    if pset.eps == 0.0:
        return AttackResult(x.copy(), clean, "pgd", clean)
    key = as_key(cfg.seed)
    alpha = cfg.resolved_step(pset.eps)
    X = np.stack([random_start(x, pset, key.derive("restart", r)) for r in range(cfg.restarts)])
    X = _project_rows(X, x, pset.p, pset.eps)
    best_x, best = x.copy(), clean
    vals = loss_value(net, X, np.full(len(X), y), loss)
    for step in range(cfg.steps + 1):
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_x = float(vals[i]), X[i].copy()
        if step == cfg.steps or best >= 1.0:
            break
        G = _ascent_direction(net, X, y, loss)
        if pset.p == INF:
            X = X + alpha * np.sign(G)
        else:
            norms = np.sqrt((G * G).sum(axis=1))
            X = X + alpha * G / np.where(norms > 0, norms, 1.0)[:, None]
        X = _project_rows(X, x, pset.p, pset.eps)
        vals = loss_value(net, X, np.full(len(X), y), loss)
    return AttackResult(best_x, best, "pgd", clean)


def fgsm_attack(net: Network, x, y: int, pset: PerturbationSet, loss) -> AttackResult:
    """One step of size eps along sign(grad) (p=inf) or grad/||grad|| (p=2).

    A zero gradient, or a step that lowers the loss, returns the clean point
    with ``zero_gradient`` set in the first case.
    """
    x = _check_x(net, x)
    clean = loss_value(net, x, y, loss)
    if pset.eps == 0.0:
        return AttackResult(x.copy(), clean, "fgsm", clean)
    g = loss_grad_input(net, x, y, loss)
    if not np.any(g):
        return AttackResult(x.copy(), clean, "fgsm", clean, zero_gradient=True)
    if pset.p == INF:
        cand = x + pset.eps * np.sign(g)
    else:
        cand = x + pset.eps * g / np.linalg.norm(g)
    cand = pset.project(cand, x)
    value = loss_value(net, cand, y, loss)
    if value < clean:
        return AttackResult(x.copy(), clean, "fgsm", clean)
    return AttackResult(cand, value, "fgsm", clean)


MAX_GRID_DIM = 3
MAX_GRID_RESOLUTION = 401


def grid_points(x, pset: PerturbationSet, resolution: int) -> np.ndarray:
    """Axis-aligned grid over the bounding box of the ball, clipped to the ball.

    Row 0 is always the clean point itself.
    """
    d = x.shape[0]
    if d > MAX_GRID_DIM:
        raise ValueError(f"grid oracle supports input dimension <= {MAX_GRID_DIM}, got {d}")
    if not 1 <= resolution <= MAX_GRID_RESOLUTION:
        raise ValueError(f"resolution must be in [1, {MAX_GRID_RESOLUTION}]")
    if pset.eps == 0.0 or resolution == 1:
        return x[None, :].copy()
    offsets = np.linspace(-pset.eps, pset.eps, resolution)
    D = np.array(list(itertools.product(offsets, repeat=d)), dtype=np.float64)
    if pset.p == 2.0:
        D = D[np.sqrt((D * D).sum(axis=1)) <= pset.eps * (1.0 + 1e-12)]
    return np.vstack([x[None, :], x[None, :] + D])


def grid_pitch(pset: PerturbationSet, resolution: int) -> float:
    if resolution <= 1:
        return 2.0 * pset.eps
    return 2.0 * pset.eps / (resolution - 1)


def grid_slack(net: Network, loss, pset: PerturbationSet, resolution: int) -> float:
    """Upper bound on (true max - grid max): Lipschitz bound times worst l2 distance to the grid."""
    d = net.input_dim
    reach = grid_pitch(pset, resolution) * math.sqrt(d) * (0.5 if pset.p == INF else 1.0)
    if pset.eps == 0.0:
        reach = 0.0
    return lipschitz_bound(net, loss) * reach


def exact_attack_grid(net: Network, x, y: int, pset: PerturbationSet, loss,
                      resolution: int = 201, chunk: int = 65536) -> AttackResult:
    """Exhaustive maximisation over the grid; ties go to the earliest grid point."""
    x = _check_x(net, x)
    P = grid_points(x, pset, resolution)
    best_i, best = 0, -np.inf
    for start in range(0, len(P), chunk):
        vals = loss_value(net, P[start:start + chunk], np.full(min(chunk, len(P) - start), y), loss)
        vals = np.atleast_1d(vals)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_i = float(vals[i]), start + i
    clean = loss_value(net, x, y, loss)
    return AttackResult(P[best_i].copy(), best, "grid", clean, resolution=resolution)


def linear_optimal_attack(w, x, y: int, pset: PerturbationSet):
    """Minimiser of ``y <w, x'>`` over the ball and the attained robust margin."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y not in (-1, 1):
        raise ValueError("y must be -1 or +1")
    q = dual_exponent(pset.p)
    if pset.p == INF:
        direction = np.sign(w)
    else:
        nw = np.linalg.norm(w)
        direction = w / nw if nw > 0 else np.zeros_like(w)
    x_adv = x - pset.eps * y * direction
    robust_margin = y * float(np.dot(w, x)) - pset.eps * lp_norm(w, q)
    return x_adv, robust_margin


def attack_batch(net: Network, X, Y, pset: PerturbationSet, loss, method: str = "pgd",
                 cfg: AttackConfig = AttackConfig(), resolution: int = 201):
    """Attack every row of ``X``; sample ``i`` uses the stream ``cfg.seed / ("sample", i)``."""
    X = np.asarray(X, dtype=np.float64)
    key = as_key(cfg.seed)
    out = np.empty_like(X)
    vals = np.empty(len(X))
    for i, (x, y) in enumerate(zip(X, Y)):
        if method == "pgd":
            sub = AttackConfig(cfg.steps, cfg.step_size, cfg.restarts,
                               seed=key.derive("sample", i))
            res = pgd_attack(net, x, int(y), pset, loss, sub)
        elif method == "fgsm":
            res = fgsm_attack(net, x, int(y), pset, loss)
        elif method == "grid":
            res = exact_attack_grid(net, x, int(y), pset, loss, resolution)
        else:
            raise ValueError(f"unknown attack method {method!r}")
        out[i], vals[i] = res.x_adv, res.loss_achieved
    return out, vals


def _project_batch(V, X, pset):
    D = V - X
    if pset.p == INF:
        return X + np.clip(D, -pset.eps, pset.eps)
    norms = np.sqrt((D * D).sum(axis=1))
    scale = np.where(norms > pset.eps, pset.eps / np.where(norms > 0, norms, 1.0), 1.0)
    return X + D * scale[:, None]


def fgsm_batch(net: Network, X, Y, pset: PerturbationSet, loss):
    """Row-wise :func:`fgsm_attack` on a batch; returns ``(X_adv, values)``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    clean = np.atleast_1d(loss_value(net, X, Y, loss))
    if pset.eps == 0.0:
        return X.copy(), clean
    G = loss_grad_input(net, X, Y, loss)
    if pset.p == INF:
        step = np.sign(G)
    else:
        norms = np.sqrt((G * G).sum(axis=1))
        step = G / np.where(norms > 0, norms, 1.0)[:, None]
    cand = _project_batch(X + pset.eps * step, X, pset)
    vals = np.atleast_1d(loss_value(net, cand, Y, loss))
    keep = vals >= clean
    return np.where(keep[:, None], cand, X), np.where(keep, vals, clean)


def pgd_batch(net: Network, X, Y, pset: PerturbationSet, loss,
              cfg: AttackConfig = AttackConfig()):
    """PGD vectorised over samples; returns ``(X_adv, values)`` of the best iterates.

    Restart 0 starts from the FGSM point, so the result never falls below
    :func:`fgsm_batch`; restart ``r > 0`` starts from a uniform draw on the
    stream ``seed / ("batch_restart", r)``. The clean point is a candidate.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    best_x, best = fgsm_batch(net, X, Y, pset, loss)
    if pset.eps == 0.0:
        return best_x, best
    key = as_key(cfg.seed)
    alpha = cfg.resolved_step(pset.eps)
    n, d = X.shape
    for r in range(cfg.restarts):
        if r == 0:
            V = best_x.copy()
        else:
            gen = key.derive("batch_restart", r).generator()
            if pset.p == INF:
                V = X + gen.uniform(-pset.eps, pset.eps, (n, d))
            else:
                U = gen.standard_normal((n, d))
                U /= np.maximum(np.sqrt((U * U).sum(axis=1)), 1e-300)[:, None]
                V = X + pset.eps * (gen.uniform(size=n) ** (1.0 / d))[:, None] * U
            V = _project_batch(V, X, pset)
        for step in range(cfg.steps + 1):
            vals = np.atleast_1d(loss_value(net, V, Y, loss))
            better = vals > best
            best = np.where(better, vals, best)
            best_x = np.where(better[:, None], V, best_x)
            if step == cfg.steps:
                break
            if getattr(loss, "margin_monotone", False):
                G = -margin_grad_input(net, V, Y)
            else:
                G = loss_grad_input(net, V, Y, loss)
            if pset.p == INF:
                V = V + alpha * np.sign(G)
            else:
                norms = np.sqrt((G * G).sum(axis=1))
                V = V + alpha * G / np.where(norms > 0, norms, 1.0)[:, None]
            V = _project_batch(V, X, pset)
    return best_x, best
