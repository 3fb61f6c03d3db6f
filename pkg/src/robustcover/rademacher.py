"""Monte Carlo estimates of (adversarial) empirical Rademacher complexity.

Linear classes ``{y <w, x> : ||w||_r <= W}`` get an exact supremum for every
sign draw. Network classes get a heuristic supremum (projected gradient ascent
on the weights), so their estimates are lower estimates of the true value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attack import AttackConfig, PerturbationSet, attack_batch
from .linalg import INF, dual_exponent, lp_norm
from .network import Network, RampLoss, backprop, loss_value, margins
from .rng import as_key, signs


@dataclass(frozen=True)
class RademacherEstimate:
    mean: float
    stderr: float
    trials: int
    values: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, values) -> "RademacherEstimate":
        values = np.asarray(values, dtype=np.float64)
        if len(values) < 2:
            raise ValueError("need at least two trials")
        return cls(float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values))),
                   len(values), values)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "trials": self.trials}


@dataclass(frozen=True)
class AscentConfig:
    steps: int = 40
    lr: float = 0.2
    starts: int = 3


@dataclass(frozen=True)
class HypothesisClassSpec:
    kind: str                                   # "linear" or "network"
    r: float = 2.0                              # linear: weight norm exponent
    W: float = 1.0                              # linear: weight budget
    template: Optional[Network] = None          # network: architecture and start point
    caps: Optional[tuple] = None                # network: per-layer Frobenius caps
    loss: object = None                         # network: loss spec
    attack: Optional[PerturbationSet] = None
    attack_cfg: AttackConfig = AttackConfig(steps=10, restarts=1)
    ascent: AscentConfig = AscentConfig()

    def __post_init__(self):
        if self.kind not in ("linear", "network"):
            raise ValueError(f"unknown class kind {self.kind!r}")
        if self.kind == "linear" and not self.W > 0:
            raise ValueError("linear budget W must be positive")
        if self.kind == "network":
            if self.template is None or self.loss is None:
                raise ValueError("network classes need a template and a loss")
            caps = self.caps or tuple(float(np.linalg.norm(W)) for W in self.template.weights)
            if len(caps) != self.template.depth or any(c <= 0 for c in caps):
                raise ValueError("one positive cap per layer is required")
            object.__setattr__(self, "caps", tuple(caps))

    def with_attack(self, pset: Optional[PerturbationSet]) -> "HypothesisClassSpec":
        return HypothesisClassSpec(self.kind, self.r, self.W, self.template, self.caps, self.loss,
                                   pset, self.attack_cfg, self.ascent)


def linear_class(r=2.0, W=1.0, attack: Optional[PerturbationSet] = None) -> HypothesisClassSpec:
    return HypothesisClassSpec("linear", float(r), float(W), attack=attack)


def network_class(template: Network, loss, caps=None, attack=None,
                  attack_cfg: AttackConfig = AttackConfig(steps=10, restarts=1),
                  ascent: AscentConfig = AscentConfig()) -> HypothesisClassSpec:
    return HypothesisClassSpec("network", template=template, caps=None if caps is None else tuple(caps),
                               loss=loss, attack=attack, attack_cfg=attack_cfg, ascent=ascent)


def _signed_sum(X, y, sigma):
    X = np.asarray(X, dtype=np.float64)
    coef = np.asarray(sigma, dtype=np.float64)
    if y is not None:
        coef = coef * np.asarray(y, dtype=np.float64)
    return coef @ X


def linear_rc_exact_per_sigma(X, sigma, r, W_budget, y=None) -> float:
    """``sup_{||w||_r <= W} sum_i sigma_i y_i <w, x_i> = W ||sum_i sigma_i y_i x_i||_{r*}``."""
    u = _signed_sum(X, y, sigma)
    return float(W_budget * lp_norm(u, dual_exponent(r)))


def linear_arc_exact_per_sigma(X, sigma, r, W_budget, pset: PerturbationSet, y=None) -> float:
    """Exact ``sup_w sum_i sigma_i min_{x' in B(x_i)} y_i <w, x'>``.

    The inner minimum is ``y_i <w, x_i> - eps ||w||_q`` (q dual to p), so the
    objective is ``<w, u> - eps s ||w||_q`` with ``s = sum_i sigma_i``. Closed
    forms exist for ``q == r`` and for ``r = 2, q = 1``.
    """
    r = float(r)
    if pset.eps == 0.0:
        return linear_rc_exact_per_sigma(X, sigma, r, W_budget, y)
    u = _signed_sum(X, y, sigma)
    s = float(np.sum(sigma))
    q = dual_exponent(pset.p)
    c = pset.eps * s
    if q == r:
        return float(W_budget * max(0.0, lp_norm(u, dual_exponent(r)) - c))
    if r == 2.0 and q == 1.0:
        return float(W_budget * np.linalg.norm(np.maximum(np.abs(u) - c, 0.0)))
    raise NotImplementedError(f"no closed form for r={r} with attack p={pset.p}")


def _sigma(key, t, n):
    return signs(key.derive("trial", t), n)


def _linear_estimate(cls, X, y, trials, seed, adversarial):
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    key = as_key(seed)
    vals = np.empty(trials)
    for t in range(trials):
        sig = _sigma(key, t, n)
        if adversarial:
            vals[t] = linear_arc_exact_per_sigma(X, sig, cls.r, cls.W, cls.attack, y) / n
        else:
            vals[t] = linear_rc_exact_per_sigma(X, sig, cls.r, cls.W, y) / n
    return RademacherEstimate.from_values(vals)


def _project_caps(weights, caps):
    out = []
    for W, c in zip(weights, caps):
        norm = np.linalg.norm(W)
        out.append(W * (c / norm) if norm > c else W)
    return out


def _surrogate_dlogits(loss, logits, y, sig):
    """d/dlogits of sum_i sigma_i psi(M_i): the ramp extended linearly outside (0, gamma)."""
    if isinstance(loss, RampLoss):
        rows = np.arange(len(y))
        others = logits.copy()
        others[rows, y] = -np.inf
        j = np.argmax(others, axis=1)
        t = logits[rows, y] - logits[rows, j]
        active = np.where(sig > 0, t > 0.0, t < loss.gamma)
        coef = np.where(active, -sig / loss.gamma, 0.0)
        g = np.zeros_like(logits)
        g[rows, y] += coef
        g[rows, j] -= coef
        return g
    return sig[:, None] * loss.grad_logits(logits, y)


def _network_sup(cls, X, y, sig, key, adversarial):
    """Heuristic sup over the capped class of ``sum_i sigma_i loss_i``."""
    tpl = cls.template
    loss = cls.loss
    asc = cls.ascent
    best = -np.inf

    def objective(net):
        if adversarial:
            Xa, vals = attack_batch(net, X, y, cls.attack, loss, "pgd",
                                    AttackConfig(cls.attack_cfg.steps, cls.attack_cfg.step_size,
                                                 cls.attack_cfg.restarts, key.derive("attack")))
        else:
            Xa, vals = X, loss_value(net, X, y, loss)
        return float(np.dot(sig, vals)), Xa

    for start in range(max(1, asc.starts)):
        if start == 0:
            weights = [W.copy() for W in tpl.weights]
        else:
            gen = key.derive("start", start).generator()
            weights = [gen.standard_normal(W.shape) for W in tpl.weights]
            weights = [W * (c / np.linalg.norm(W)) for W, c in zip(weights, cls.caps)]
        weights = _project_caps(weights, cls.caps)
        for step in range(asc.steps + 1):
            net = tpl.with_weights(weights)
            value, Xa = objective(net)
            best = max(best, value)
            if step == asc.steps:
                break
            _, _, dWs = backprop(net, Xa, lambda lg: _surrogate_dlogits(loss, lg, y, sig))
            new = []
            for W, dW, c in zip(weights, dWs, cls.caps):
                norm = np.linalg.norm(dW)
                new.append(W + asc.lr * c * dW / norm if norm > 0 else W)
            weights = _project_caps(new, cls.caps)
    return best


def _network_estimate(cls, X, y, trials, seed, adversarial):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    key = as_key(seed)
    vals = np.empty(trials)
    for t in range(trials):
        sig = _sigma(key, t, n)
        vals[t] = _network_sup(cls, X, y, sig, key.derive("search", t), adversarial) / n
    return RademacherEstimate.from_values(vals)


def mc_standard_rc(cls: HypothesisClassSpec, X, y, trials: int = 200, seed=0) -> RademacherEstimate:
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if cls.kind == "linear":
        return _linear_estimate(cls, X, y, trials, seed, adversarial=False)
    return _network_estimate(cls, X, y, trials, seed, adversarial=False)


def mc_adversarial_rc(cls: HypothesisClassSpec, X, y, trials: int = 200, seed=0) -> RademacherEstimate:
    """Adversarial RC estimate; reduces to :func:`mc_standard_rc` exactly when eps = 0."""
    if cls.attack is None:
        raise ValueError("adversarial estimate needs cls.attack")
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if cls.attack.eps == 0.0:
        return mc_standard_rc(cls, X, y, trials, seed)
    if cls.kind == "linear":
        return _linear_estimate(cls, X, y, trials, seed, adversarial=True)
    return _network_estimate(cls, X, y, trials, seed, adversarial=True)
