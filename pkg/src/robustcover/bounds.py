"""Generalization-bound calculators.

Every constant hidden in an O~(.) is pinned here:

* Dudley:        R <= inf_alpha 4 alpha / sqrt(n) + 12/n int_alpha^sqrt(n) sqrt(ln N(e)) de
* generalization: gap <= 2 R + 3 sqrt(ln(2/delta) / (2n))

The covering number fed to Dudley is the per-layer Maurey sum of
:func:`robustcover.covers.adversarial_cover_bound` with the data matrix
bounded in Frobenius norm by ``B~ sqrt(n)``, each ceiling replaced by
``x + 1`` so the integrand is smooth (see :func:`cover_function`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .covers import adversarial_cover_bound
from .linalg import (INF, entrywise_p_norm, group_norm_1_inf, group_norm_2_1,
                     spectral_norm)


@dataclass(frozen=True)
class NormProfile:
    s: tuple            # spectral norms (or bounds) per layer
    a: tuple            # entrywise l1 norms (or bounds)
    norms_21: tuple     # sum of row l2 norms
    norms_1inf: tuple   # sum of row max-abs entries
    frobenius: tuple
    rho_act: tuple      # activation Lipschitz constants
    rho: float          # loss Lipschitz constant w.r.t. logits (2/gamma for the ramp margin loss)
    dims: tuple         # (m_0 = d, m_1, ..., m_L = k)
    gamma: Optional[float] = None

    def __post_init__(self):
        L = len(self.s)
        if L == 0 or len(self.dims) != L + 1:
            raise ValueError("profile needs L >= 1 layers and L + 1 dims")
        for name in ("a", "norms_21", "norms_1inf", "frobenius", "rho_act"):
            if len(getattr(self, name)) != L:
                raise ValueError(f"{name} must have one entry per layer")
        if any(v <= 0 for v in self.s) or self.rho <= 0:
            raise ValueError("spectral norms and rho must be positive")

    @property
    def depth(self) -> int:
        return len(self.s)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def max_width(self) -> int:
        return max(self.dims)

    @classmethod
    def from_network(cls, net, loss) -> "NormProfile":
        return cls(
            s=tuple(spectral_norm(W) for W in net.weights),
            a=tuple(entrywise_p_norm(W, 1) for W in net.weights),
            norms_21=tuple(group_norm_2_1(W) for W in net.weights),
            norms_1inf=tuple(group_norm_1_inf(W) for W in net.weights),
            frobenius=tuple(entrywise_p_norm(W, 2) for W in net.weights),
            rho_act=net.lipschitz_constants,
            rho=loss.logit_lipschitz,
            dims=net.widths,
            gamma=getattr(loss, "gamma", None),
        )

    def scaled(self, c: Sequence[float]) -> "NormProfile":
        """Profile of the network with layer ``i`` multiplied by ``c[i]``."""
        return NormProfile(
            tuple(v * ci for v, ci in zip(self.s, c)), tuple(v * ci for v, ci in zip(self.a, c)),
            tuple(v * ci for v, ci in zip(self.norms_21, c)),
            tuple(v * ci for v, ci in zip(self.norms_1inf, c)),
            tuple(v * ci for v, ci in zip(self.frobenius, c)),
            self.rho_act, self.rho, self.dims, self.gamma)


def b_tilde(B: float, eps: float, p, d: int) -> float:
    """``B + max{1, d^(1/2 - 1/p)} eps``: l2 radius of every point of an l_p attack."""
    p = float(p)
    if B < 0 or eps < 0 or not p >= 1:
        raise ValueError("need B >= 0, eps >= 0, p >= 1")
    inv_p = 0.0 if p == INF else 1.0 / p
    return B + max(1.0, d ** (0.5 - inv_p)) * eps


def adaptive_simpson(f: Callable[[float], float], lo: float, hi: float, rel_tol: float = 1e-8,
                     max_depth: int = 48) -> float:
    if hi <= lo:
        return 0.0
    mid = 0.5 * (lo + hi)
    flo, fmid, fhi = f(lo), f(mid), f(hi)
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    tol = rel_tol * max(abs(whole), 1e-300)
    total = 0.0
    stack = [(lo, hi, flo, fmid, fhi, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, est, t, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15.0 * t:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * t, depth + 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * t, depth + 1))
    return total


@dataclass(frozen=True)
class DudleyResult:
    value: float
    alpha: float
    integral: float


def default_alpha_grid(n: int, points: int = 160) -> np.ndarray:
    return np.geomspace(math.sqrt(n) * 1e-12, math.sqrt(n), points)


def dudley_value(ln_cover: Callable[[float], float], n: int,
                 alpha_grid: Optional[Sequence[float]] = None, rel_tol: float = 1e-8) -> DudleyResult:
    """Minimise ``4 alpha/sqrt(n) + 12/n int_alpha^sqrt(n) sqrt(ln N(e)) de`` over alpha.

    The grid is searched first, then the best bracket is refined by bounded
    Brent; the grid's lowest point caps alpha away from 0 where the integral
    diverges.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    top = math.sqrt(n)
    grid = np.unique(np.clip(np.asarray(default_alpha_grid(n) if alpha_grid is None else alpha_grid,
                                        dtype=np.float64), 0.0, top))
    if grid[-1] < top:
        grid = np.append(grid, top)

    def g(e):
        return math.sqrt(max(ln_cover(e), 0.0)) if e < top else 0.0

    pieces = [adaptive_simpson(g, grid[i], grid[i + 1], rel_tol) for i in range(len(grid) - 1)]
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])

    def objective(alpha, j):
        # alpha in [grid[j-1], grid[j]]: integral = int_alpha^grid[j] + tail[j]
        return 4.0 * alpha / top + 12.0 / n * (adaptive_simpson(g, alpha, grid[j], rel_tol) + tail[j])

    values = 4.0 * grid / top + 12.0 / n * tail
    j = int(np.argmin(values))
    best_value, best_alpha, best_int = float(values[j]), float(grid[j]), float(tail[j])
    for lo_j, hi_j in ((j - 1, j), (j, j + 1)):
        if lo_j < 0 or hi_j >= len(grid):
            continue
        res = minimize_scalar(lambda al: objective(al, hi_j), bounds=(grid[lo_j], grid[hi_j]),
                              method="bounded", options={"xatol": 1e-14 * max(grid[hi_j], 1e-300)})
        if res.fun < best_value:
            integral = (res.fun - 4.0 * res.x / top) * n / 12.0
            best_value, best_alpha, best_int = float(res.fun), float(res.x), float(integral)
    return DudleyResult(best_value, best_alpha, best_int)


def dudley_closed_form_quadratic(R: float, n: int) -> float:
    """Minimum of the Dudley objective for ``ln N(e) = R / e^2`` (interior optimum)."""
    return 12.0 * math.sqrt(R) / n * (1.0 + math.log(n / (3.0 * math.sqrt(R))))


def confidence_term(n: int, delta: float) -> float:
    return 3.0 * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def cover_function(profile: NormProfile, btilde: float, n: int, convention: str = "consistent",
                   kind: str = "majorant"):
    """``e -> ln N(e)`` for the adversarial class, data norm ``B~ sqrt(n)``.

    ``kind="assembled"`` is the per-layer ceiled Maurey sum. It is a step
    function of ``e`` and slow to integrate. ``kind="majorant"`` replaces each
    ``ceil(x)`` by ``x + 1``, giving ``U / e^2 + sum_i ln(2 m_i m_(i-1))``,
    which is smooth and never below the assembled sum.
    """
    data_norm = btilde * math.sqrt(n)
    if kind == "assembled":
        def ln_cover(e):
            return adversarial_cover_bound(profile.s, profile.a, profile.rho_act, profile.rho,
                                           profile.dims, data_norm, e, convention).assembled
        return ln_cover
    if kind != "majorant":
        raise ValueError(f"unknown cover function kind {kind!r}")
    unit = adversarial_cover_bound(profile.s, profile.a, profile.rho_act, profile.rho, profile.dims,
                                   data_norm, 1.0, convention)
    U, C = unit.unceiled, unit.ceiling_slack

    def ln_cover(e):
        return U / (e * e) + C
    return ln_cover


@dataclass(frozen=True)
class MainBound:
    value: float              # 2 * dudley + confidence
    rademacher_bound: float   # dudley value
    confidence: float
    alpha: float
    ln_cover_at_alpha: float
    constant_free: float      # the O~ expression with constants dropped

    def to_dict(self):
        return dict(self.__dict__)


def constant_free_bound(profile: NormProfile, btilde: float, n: int, delta: float) -> float:
    S = sum((a / s) ** (2.0 / 3.0) for a, s in zip(profile.a, profile.s))
    prod = 1.0
    for r, s in zip(profile.rho_act, profile.s):
        prod *= r * s
    return btilde * profile.rho * prod / math.sqrt(n) * S ** 1.5 + math.sqrt(math.log(1.0 / delta) / n)


def main_bound(profile: NormProfile, btilde: float, n: int, delta: float,
               alpha_grid=None) -> MainBound:
    if n < 1 or not 0 < delta < 1:
        raise ValueError("need n >= 1 and delta in (0, 1)")
    ln_cover = cover_function(profile, btilde, n)
    dud = dudley_value(ln_cover, n, alpha_grid)
    conf = confidence_term(n, delta)
    return MainBound(2.0 * dud.value + conf, dud.value, conf, dud.alpha, ln_cover(dud.alpha),
                     constant_free_bound(profile, btilde, n, delta))


def xiao_bound(profile: NormProfile, btilde: float, n: int) -> float:
    """``B~ m sqrt(L max(log L, 1)) prod ||W_i||_op / sqrt(n)``, ``m`` the largest layer width."""
    L = profile.depth
    prod = 1.0
    for s in profile.s:
        prod *= s
    return btilde * profile.max_width * math.sqrt(L * max(math.log(L), 1.0)) * prod / math.sqrt(n)


@dataclass(frozen=True)
class MustafaTerms:
    term1: float
    term2: float
    product: float
    Gamma: float
    lam: float
    ln_inner: float


def mustafa_bound(profile: NormProfile, btilde: float, n: int, gamma: float, eps: float,
                  C1: float = 1.0, C2: float = 1.0) -> MustafaTerms:
    """Perturbation-set cover bound: term1 (norm factor) times term2 (log factor).

    ``ln_inner`` is evaluated in log space; ``(6 eps lambda n / gamma)^d`` overflows
    quickly in d.
    """
    L, d = profile.depth, profile.input_dim
    widths = profile.dims[1:]
    prod = 1.0
    for s in profile.s:
        prod *= s
    ratio = sum((n21 / s) ** 2 for n21, s in zip(profile.norms_21, profile.s))
    term1 = btilde * L * prod * math.sqrt(ratio) / math.sqrt(n)
    Gamma = max(prod * profile.frobenius[i] * widths[i] / profile.s[i] for i in range(L))
    m_bar = max(widths)
    tail = 1.0
    for s in profile.s[1:]:
        tail *= s
    lam = 2.0 / gamma * tail * profile.norms_1inf[0] * math.sqrt(widths[0])
    base = C1 * btilde * Gamma * n / gamma + C2 * m_bar
    inner_scale = 6.0 * eps * lam * n / gamma
    if inner_scale > 0:
        ln_inner = float(np.logaddexp(math.log(base) + math.log(n) + d * math.log(inner_scale), 0.0))
    else:
        ln_inner = 0.0
    term2 = math.sqrt(ln_inner) * math.log(n)
    return MustafaTerms(term1, term2, term1 * term2, Gamma, lam, ln_inner)


def awasthi_two_layer_bound(profile: NormProfile, btilde: float, n: int) -> float:
    """``B~ ||W_1||_op ||W_2||_op (1 + sqrt(d (m + 1))) / sqrt(n)`` for two-layer nets."""
    if profile.depth != 2:
        raise ValueError("the two-layer bound needs exactly L = 2 layers")
    d, m = profile.dims[0], profile.dims[1]
    A = 1.0 + math.sqrt(d * (m + 1))
    return btilde * profile.s[0] * profile.s[1] * A / math.sqrt(n)


def linear_sandwich(W_budget: float, eps: float, p, r, d: int, n: int, standard_rc: float):
    """Lower/upper bounds on the adversarial RC of ``{y<w,x>: ||w||_r <= W}``."""
    p, r = float(p), float(r)
    if not (p >= 1 and r >= 1):
        raise ValueError("exponents must be >= 1")
    inv = lambda v: 0.0 if v == INF else 1.0 / v  # noqa: E731
    factor = max(d ** (1.0 - inv(p) - inv(r)), 1.0)
    shift = eps * W_budget * factor
    lower = max(standard_rc, shift / (2.0 * math.sqrt(2.0 * n)))
    upper = standard_rc + shift / (2.0 * math.sqrt(n))
    return lower, upper


@dataclass
class BoundReport:
    B: float
    b_tilde: float
    n: int
    eps: float
    p: float
    delta: float
    gamma: Optional[float]
    rho: float
    profile: NormProfile
    main: MainBound
    cover_at_alpha: dict
    xiao: float
    mustafa: MustafaTerms
    awasthi: Optional[float]
    linear: Optional[tuple]
    C1: float = 1.0
    C2: float = 1.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        prof = self.profile
        layers = []
        for i in range(prof.depth):
            cols = prof.dims[i]
            layers.append({
                "spectral": prof.s[i], "l1": prof.a[i], "norm_2_1": prof.norms_21[i],
                "norm_1_inf": prof.norms_1inf[i], "frobenius": prof.frobenius[i],
                "rho_activation": prof.rho_act[i], "rows": prof.dims[i + 1], "cols": cols,
                "l1_over_2_1": prof.a[i] / prof.norms_21[i] if prof.norms_21[i] > 0 else None,
                "norm_chain_ok": prof.norms_21[i] <= prof.a[i] * (1 + 1e-12)
                and prof.a[i] <= math.sqrt(cols) * prof.norms_21[i] * (1 + 1e-12),
            })
        main = self.main.value
        out = {
            "B": self.B, "B_tilde": self.b_tilde, "n": self.n, "eps": self.eps,
            "p": "inf" if self.p == INF else self.p, "delta": self.delta, "gamma": self.gamma,
            "rho": self.rho, "rho_kind": "2/gamma (ramp margin, logits l2)" if self.gamma else "declared",
            "rho_margin_form": (1.0 / self.gamma) if self.gamma else None,
            "layers": layers, "dims": list(prof.dims),
            "main_bound": self.main.to_dict(), "cover_bound_at_alpha": self.cover_at_alpha,
            "xiao_bound": self.xiao,
            "mustafa": {"term1": self.mustafa.term1, "term2": self.mustafa.term2,
                        "product": self.mustafa.product, "Gamma": self.mustafa.Gamma,
                        "lambda": self.mustafa.lam, "C1": self.C1, "C2": self.C2},
            "awasthi_two_layer": self.awasthi,
            "linear_sandwich": None if self.linear is None else
            {"lower": self.linear[0], "upper": self.linear[1]},
            "confidence_term": math.sqrt(math.log(1.0 / self.delta) / self.n),
            "ratios": {
                "main_over_xiao": main / self.xiao if self.xiao > 0 else None,
                "main_over_mustafa": main / self.mustafa.product if self.mustafa.product > 0 else None,
                "main_over_awasthi": None if not self.awasthi else main / self.awasthi,
                "constant_free_over_xiao": self.main.constant_free / self.xiao if self.xiao > 0 else None,
            },
        }
        out.update(self.extra)
        return out


def bound_report(net, X, loss, p, eps, delta, B=None, C1=1.0, C2=1.0, linear_trials=200,
                 seed=0) -> BoundReport:
    """Evaluate every bound for a network on the data rows ``X`` (n, d)."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    B = float(np.sqrt((X * X).sum(axis=1)).max()) if B is None else float(B)
    bt = b_tilde(B, eps, p, d)
    prof = NormProfile.from_network(net, loss)
    main = main_bound(prof, bt, n, delta)
    cover = adversarial_cover_bound(prof.s, prof.a, prof.rho_act, prof.rho, prof.dims,
                                    bt * math.sqrt(n), main.alpha).to_dict()
    gamma = getattr(loss, "gamma", None)
    must = mustafa_bound(prof, bt, n, gamma if gamma else 1.0 / prof.rho, eps, C1, C2)
    awasthi = awasthi_two_layer_bound(prof, bt, n) if prof.depth == 2 else None
    linear = None
    if prof.depth == 1 and float(p) in (2.0, INF):
        from .rademacher import linear_class, mc_standard_rc
        W = net.weights[0]
        budget = max(np.linalg.norm(W[i] - W[j]) for i in range(W.shape[0])
                     for j in range(W.shape[0]) if i != j)
        std = mc_standard_rc(linear_class(2.0, budget), X, np.ones(n, dtype=np.int64),
                             linear_trials, seed).mean
        linear = linear_sandwich(budget, eps, p, 2.0, d, n, std)
    return BoundReport(B, bt, n, float(eps), float(p), float(delta), gamma, prof.rho, prof, main,
                       cover, xiao_bound(prof, bt, n), must, awasthi, linear, C1, C2)
