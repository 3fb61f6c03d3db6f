"""Maurey-sparsified uniform covers and covering-number bounds.

Cover elements live in ``C = {(a/k) sum_i k_i V_i : sum_i k_i = k}`` with
basis ``V = g e_i e_j^T`` (``g = +-1``), stored as an ``(m, d, 2)`` count
array in the canonical order ``2 * (i * d + j) + (g == -1)``. Units not spent
on a basis matrix sit on a zero pseudo-element. Data matrices follow the
column convention: ``X`` is ``(d, n)`` and the layer output is ``W @ X``.

``C`` itself, of size ``(2dm)^k``, is never enumerated; membership is shown
by producing a witness (randomised rounding plus a greedy pass).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .linalg import INF, as_matrix, lp_norm
from .rng import as_key


@dataclass(frozen=True)
class UniformCoverSpec:
    a: float
    b: float
    eps: float
    d: int
    m: int

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.eps > 0):
            raise ValueError("a, b and eps must be positive")
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be positive integers")


@dataclass(frozen=True, eq=False)
class MaureyCoverElement:
    counts: np.ndarray
    a: float
    k: int

    @property
    def zero_count(self) -> int:
        return int(self.k - self.counts.sum())

    def matrix(self) -> np.ndarray:
        signed = self.counts[..., 0] - self.counts[..., 1]
        return self.a * signed.astype(np.float64) / self.k

    def l1(self) -> float:
        return math.fsum(np.abs(self.matrix()).ravel())


def _ceil_ratio_sq(num_a, num_b, den) -> int:
    """Exact ``ceil((a * b / den)^2)`` on the binary values of the floats."""
    ratio = (Fraction(num_a) * Fraction(num_b) / Fraction(den)) ** 2
    return max(1, math.ceil(ratio))


def maurey_cover_params(spec: UniformCoverSpec):
    """``k = ceil(a^2 b^2 / eps^2)`` and ``ln |C| = k ln(2dm)``."""
    k = _ceil_ratio_sq(spec.a, spec.b, spec.eps)
    return k, k * math.log(2 * spec.d * spec.m)


def _realize(counts, a, k):
    return a * (counts[..., 0] - counts[..., 1]).astype(np.float64) / k


def _residuals(count_batch, W, X, a, k):
    U = W @ X
    M = _realize(count_batch, a, k)
    R = U[None] - np.einsum("rij,jn->rin", M, X)
    return np.sqrt((R * R).sum(axis=(1, 2)))


def rounding_probabilities(W, a):
    """Sampling weights ``|W_ij| / a`` in canonical basis order, plus the zero mass."""
    W = np.asarray(W, dtype=np.float64)
    p = np.zeros(W.shape + (2,))
    p[..., 0] = np.where(W > 0, W, 0.0) / a
    p[..., 1] = np.where(W < 0, -W, 0.0) / a
    flat = p.ravel()
    total = flat.sum()
    if total > 1.0:
        flat = flat / total
        total = 1.0
    return np.append(flat, max(0.0, 1.0 - total))


def random_rounding(W, a, k, key, probs=None):
    """One i.i.d. sample of ``k`` basis draws with probabilities ``|W_ij| / a``."""
    if probs is None:
        probs = rounding_probabilities(W, a)
    draws = key.generator().multinomial(k, probs)
    return draws[:-1].reshape(W.shape + (2,)).astype(np.int64)


def greedy_rounding(W, X, a, k):
    U = W @ X
    counts, _ = kernels.active.greedy_maurey(np.ascontiguousarray(U @ X.T),
                                             np.ascontiguousarray(X @ X.T), a / k, int(k))
    return counts


def maurey_round(W, X, a: float, k: int, restarts: int = 64, seed=0, greedy: bool = True):
    """Best cover element for ``W X`` among randomised roundings and one greedy pass.

    Returns ``(element, residual)`` with ``residual = ||W X - element X||_F``.
    Candidate order is greedy first, then restart 0, 1, ...; ties keep the
    earliest. Restart ``r`` uses the stream ``seed / ("round", r)``.
    """
    W = as_matrix(W)
    X = as_matrix(X)
    if X.shape[0] != W.shape[1]:
        raise ValueError(f"W is {W.shape}, X is {X.shape}: inner dimensions differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    zero = np.zeros(W.shape + (2,), dtype=np.int64)
    if a == 0:
        return MaureyCoverElement(zero, 0.0, int(k)), float(np.linalg.norm(W @ X))
    if lp_norm(W, 1) > a * (1 + 1e-12):
        raise ValueError("||W||_1 exceeds the budget a")
    key = as_key(seed)
    candidates = [zero]
    if greedy:
        candidates.append(greedy_rounding(W, X, a, k))
    probs = rounding_probabilities(W, a)
    for r in range(restarts):
        candidates.append(random_rounding(W, a, k, key.derive("round", r), probs))
    batch = np.stack(candidates)
    res = _residuals(batch, W, X, a, k)
    # the zero element is only a fallback: it is listed first but loses ties
    order = list(range(1, len(candidates))) + [0]
    best = min(order, key=lambda i: (res[i], order.index(i)))
    return MaureyCoverElement(batch[best].copy(), float(a), int(k)), float(res[best])


def single_rounding_sq_residual(W, X, a, k, key) -> float:
    counts = random_rounding(W, a, k, key)
    return float(_residuals(counts[None], W, X, a, k)[0] ** 2)


def maurey_expectation_bound(W, X, a, b, k) -> float:
    """``(alpha (a b)^2 - ||W X||^2) / k`` with ``alpha = ||W||_1 / a``."""
    alpha = lp_norm(W, 1) / a
    u = W @ X
    return (alpha * (a * b) ** 2 - float((u * u).sum())) / k


def sample_cover_instance(spec: UniformCoverSpec, key, boundary: bool, n_cols: int = 4):
    """Random ``(W, X)`` with ``||W||_1 <= a`` and ``||X||_F <= b``.

    Boundary samples sit exactly on both constraints. Interior samples get
    radii drawn uniformly in (0, 1].
    """
    gen = key.generator()
    W = gen.standard_normal((spec.m, spec.d))
    if gen.uniform() < 0.3:
        W *= gen.uniform(size=W.shape) < 0.5
        if not np.any(W):
            W[gen.integers(spec.m), gen.integers(spec.d)] = 1.0
    X = gen.standard_normal((spec.d, n_cols))
    rw, rx = (1.0, 1.0) if boundary else (1.0 - gen.uniform(), 1.0 - gen.uniform())
    W *= spec.a * rw / lp_norm(W, 1)
    X *= spec.b * rx / np.linalg.norm(X)
    return W, X


@dataclass
class ViolationReport:
    samples: int
    violations: int
    worst_residual: float
    eps: float
    k: int
    ln_cardinality_bound: float
    restarts: int
    single_sample_mean_sq: float
    single_sample_stderr_sq: float
    expectation_bound: float
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def success_rate(self) -> float:
        return 1.0 - self.violations / self.samples

    @property
    def expectation_ok(self) -> bool:
        return self.single_sample_mean_sq <= self.expectation_bound + 3.0 * self.single_sample_stderr_sq

    def to_dict(self) -> dict:
        return {
            "samples": self.samples, "violations": self.violations,
            "success_rate": self.success_rate, "worst_residual": self.worst_residual,
            "eps": self.eps, "k": self.k, "ln_cardinality_bound": self.ln_cardinality_bound,
            "restarts": self.restarts, "single_sample_mean_sq": self.single_sample_mean_sq,
            "single_sample_stderr_sq": self.single_sample_stderr_sq,
            "expectation_bound": self.expectation_bound, "expectation_ok": self.expectation_ok,
        }


def uniform_cover_verify(spec: UniformCoverSpec, sample_count: int = 1000, restarts: int = 64,
                         seed=0, n_cols: int = 4) -> ViolationReport:
    """Search a cover witness within ``eps`` for each sampled ``(W, X)``.

    Even-indexed samples are boundary samples. The candidate space (``k``,
    basis, scale ``a``) depends on ``spec`` only, never on the sampled ``X``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    k, ln_bound = maurey_cover_params(spec)
    key = as_key(seed)
    residuals = np.empty(sample_count)
    single_sq = np.empty(sample_count)
    for s in range(sample_count):
        sk = key.derive("sample", s)
        W, X = sample_cover_instance(spec, sk.derive("instance"), s % 2 == 0, n_cols)
        _, residuals[s] = maurey_round(W, X, spec.a, k, restarts, sk.derive("search"))
        single_sq[s] = single_rounding_sq_residual(W, X, spec.a, k, sk.derive("single"))
    violations = int(np.sum(residuals > spec.eps))
    stderr = float(single_sq.std(ddof=1) / math.sqrt(sample_count)) if sample_count > 1 else 0.0
    return ViolationReport(sample_count, violations, float(residuals.max()), spec.eps, k, ln_bound,
                           restarts, float(single_sq.mean()), stderr,
                           (spec.a * spec.b) ** 2 / k, residuals)


def standard_cover_bound(a, b, m, r, eps, d) -> float:
    """``ceil(a^2 b^2 m^(2/r) / eps^2) ln(2dm)`` for the data-dependent matrix cover."""
    r = float(r)
    if not r >= 1:
        raise ValueError("r must be >= 1 or inf")
    if r == INF:
        k = _ceil_ratio_sq(a, b, eps)
    else:
        k = max(1, math.ceil((a * b) ** 2 * m ** (2.0 / r) / eps ** 2))
    return k * math.log(2 * d * m)


def _prod(values):
    out = 1.0
    for v in values:
        out *= v
    return out


def epsilon_allocation(s: Sequence[float], a: Sequence[float], rho_act: Sequence[float],
                       rho: float, eps: float, convention: str = "consistent") -> list:
    """Per-layer cover radii ``eps_i``.

    ``eps_i = eps (a_i/s_i)^(2/3) / (S rho rho_i P_i)`` with
    ``S = sum_j (a_j/s_j)^(2/3)``. With ``convention="consistent"``
    ``P_i = prod_{j>i} rho_j s_j``, which makes the composed radius
    ``rho sum_j eps_j rho_j prod_{l>j} rho_l s_l`` equal ``eps`` exactly.
    ``convention="printed"`` uses ``prod_{j<i}`` instead.
    """
    L = len(s)
    if not (len(a) == len(rho_act) == L) or L == 0:
        raise ValueError("s, a, rho_act must be non-empty and of equal length")
    if any(v <= 0 for v in s) or any(v < 0 for v in a) or any(v <= 0 for v in rho_act):
        raise ValueError("need s_i > 0, a_i >= 0, rho_i > 0")
    if not (rho > 0 and eps > 0):
        raise ValueError("rho and eps must be positive")
    if all(v == 0 for v in a):
        raise ValueError("all a_i are zero: degenerate network")
    weights = [(ai / si) ** (2.0 / 3.0) for ai, si in zip(a, s)]
    total = sum(weights)
    out = []
    for i in range(L):
        if convention == "consistent":
            P = _prod(rho_act[j] * s[j] for j in range(i + 1, L))
        elif convention == "printed":
            P = _prod(rho_act[j] * s[j] for j in range(i))
        else:
            raise ValueError(f"unknown convention {convention!r}")
        out.append(eps / (rho * rho_act[i] * P) * weights[i] / total)
    return out


def composed_radius(eps_list, rho_act, c, rho) -> float:
    """``rho sum_j eps_j rho_j prod_{l>j} rho_l c_l``."""
    L = len(eps_list)
    return rho * sum(eps_list[j] * rho_act[j] * _prod(rho_act[l] * c[l] for l in range(j + 1, L))
                     for j in range(L))


@dataclass(frozen=True)
class CoverBound:
    assembled: float           # per-layer ceiled sum, ground truth
    unceiled: float            # same sum without ceilings
    closed_form: float         # consistent closed form (rho^2, squared product, exponent 3)
    printed_closed_form: float  # closed form as printed in the source (rho, product, exponent 3/2)
    ceiling_slack: float       # sum_i ln(2 m_i m_{i-1})
    eps_list: tuple
    k_list: tuple
    layer_terms: tuple

    @property
    def printed_discrepancy(self) -> float:
        return self.printed_closed_form / self.closed_form if self.closed_form > 0 else math.nan

    def to_dict(self) -> dict:
        return {"assembled": self.assembled, "unceiled": self.unceiled,
                "closed_form": self.closed_form, "printed_closed_form": self.printed_closed_form,
                "printed_over_closed": self.printed_discrepancy,
                "ceiling_slack": self.ceiling_slack, "eps_list": list(self.eps_list),
                "k_list": list(self.k_list), "layer_terms": list(self.layer_terms)}


def adversarial_cover_bound(s, a, rho_act, rho, dims, input_norm, eps,
                            convention: str = "consistent") -> CoverBound:
    """Covering-number bound ``ln N`` for the adversarial class.

    ``dims = (m_0, ..., m_L)``; ``input_norm`` bounds the Frobenius norm of the
    (perturbed) data matrix. Layer ``i`` gets a Maurey cover at radius
    ``eps_i`` for inputs of norm ``input_norm * prod_{j<i} rho_j s_j``.
    """
    L = len(s)
    if len(dims) != L + 1:
        raise ValueError("dims must list m_0 .. m_L")
    eps_list = epsilon_allocation(s, a, rho_act, rho, eps, convention)
    terms, ks, unceiled = [], [], 0.0
    for i in range(L):
        log_card = math.log(2 * dims[i + 1] * dims[i])
        if a[i] == 0:
            ks.append(0)
            terms.append(0.0)
            continue
        b_i = input_norm * _prod(rho_act[j] * s[j] for j in range(i))
        ratio = (a[i] * b_i / eps_list[i]) ** 2
        k_i = max(1, math.ceil(ratio))
        ks.append(k_i)
        terms.append(k_i * log_card)
        unceiled += ratio * log_card
    m_bar = max(dims)
    ln_bar = math.log(2 * m_bar * m_bar)
    S = sum((ai / si) ** (2.0 / 3.0) for ai, si in zip(a, s))
    prod_rs = _prod(r * si for r, si in zip(rho_act, s))
    closed = input_norm ** 2 * rho ** 2 * prod_rs ** 2 * S ** 3 * ln_bar / eps ** 2
    printed = input_norm ** 2 * rho * ln_bar / eps ** 2 * prod_rs * S ** 1.5
    slack = sum(math.log(2 * dims[i + 1] * dims[i]) for i in range(L))
    return CoverBound(sum(terms), unceiled, closed, printed, slack, tuple(eps_list), tuple(ks),
                      tuple(terms))


def pairwise_distances(points, norm=2.0) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    diff = np.abs(P[:, None, :] - P[None, :, :])
    norm = float(norm)
    if norm == INF:
        return diff.max(axis=2)
    if norm == 2.0:
        return np.sqrt((diff * diff).sum(axis=2))
    if norm == 1.0:
        return diff.sum(axis=2)
    return (diff ** norm).sum(axis=2) ** (1.0 / norm)


def brute_force_cover_number(points, eps: float, norm=2.0) -> int:
    """Greedy internal ``eps``-cover size; within ``1 + ln N`` of the optimum."""
    N = len(points)
    if N == 0:
        return 0
    if N > 5000:
        raise ValueError("brute-force cover is limited to 5000 points")
    adjacency = pairwise_distances(points, norm) <= eps
    return int(len(kernels.active.greedy_set_cover(np.ascontiguousarray(adjacency))))
