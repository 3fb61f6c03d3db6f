"""Dense matrix norms, the spectral norm by power iteration, and l_p-ball projection.

Matrices and vectors are plain ``numpy.ndarray`` of float64. Norms written
``||W||_p`` are entrywise; ``||W||_{2,1}`` is the sum of row l2 norms.
"""
import math

import numpy as np

INF = math.inf


class SpectralNormError(RuntimeError):
    """Power iteration failed to converge; ``last`` holds the final estimate."""

    def __init__(self, message, last):
        super().__init__(message)
        self.last = last


def as_matrix(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("matrix has non-finite entries")
    return W


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _check_exponent(p):
    p = float(p)
    if not (p >= 1.0):
        raise ValueError(f"exponent must be >= 1 or inf, got {p}")
    return p


def dual_exponent(p):
    """Conjugate exponent q with 1/p + 1/q = 1."""
    p = _check_exponent(p)
    if p == 1.0:
        return INF
    if p == INF:
        return 1.0
    return p / (p - 1.0)


def lp_norm(v, p) -> float:
    """Entrywise l_p norm of an array of any shape."""
    p = _check_exponent(p)
    a = np.abs(np.asarray(v, dtype=np.float64)).ravel()
    if a.size == 0:
        return 0.0
    if p == INF:
        return float(a.max())
    if p == 1.0:
        return float(a.sum())
    scale = a.max()
    if p == 2.0:
        # scaled so tiny or huge entries neither underflow nor overflow
        return float(scale * math.sqrt(np.dot(a / scale, a / scale))) if scale > 0 else 0.0
    if scale == 0.0:
        return 0.0
    return float(scale * np.sum((a / scale) ** p) ** (1.0 / p))


def entrywise_p_norm(W, p) -> float:
    return lp_norm(as_matrix(W), p)


def group_norm_2_1(W) -> float:
    """Sum over rows of the row l2 norms."""
    W = as_matrix(W)
    scale = np.abs(W).max(axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    R = W / safe[:, None]
    return float((scale * np.sqrt((R * R).sum(axis=1))).sum())


def group_norm_1_inf(W) -> float:
    """Sum over rows of the row max-abs entries."""
    W = as_matrix(W)
    return float(np.abs(W).max(axis=1).sum())


def _power_iterate(W, v, tol, max_iters):
    sigma = 0.0
    for _ in range(max_iters):
        u = W @ v
        nu = math.sqrt(np.dot(u, u))
        if nu == 0.0:
            return 0.0, True
        v_next = W.T @ (u / nu)
        nv = math.sqrt(np.dot(v_next, v_next))
        # nv = ||W^T W v|| / ||W v||, a lower bound on sigma_max that increases monotonically
        if abs(nv - sigma) <= tol * nv:
            return nv, True
        sigma = nv
        v = v_next / nv
    return sigma, False


def spectral_norm(W, tol=1e-10, max_iters=10_000) -> float:
    """Largest singular value of ``W`` by power iteration on ``W^T W``.

    The start vector is the normalised all-ones vector. A second run from a
    fixed perturbed start covers the case where all-ones is (nearly)
    orthogonal to the top right-singular space; the larger estimate wins.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    W = as_matrix(W)
    if not np.any(W):
        return 0.0
    cols = W.shape[1]
    starts = [np.ones(cols)]
    if cols > 1:
        starts.append(np.ones(cols) + np.linspace(-0.5, 0.5, cols) + 0.1 * (-1.0) ** np.arange(cols))
    best, converged_any, last = 0.0, False, 0.0
    for v0 in starts:
        v0 = v0 / math.sqrt(np.dot(v0, v0))
        value, ok = _power_iterate(W, v0, tol, max_iters)
        last = max(last, value)
        if ok:
            converged_any = True
            best = max(best, value)
    if not converged_any:
        raise SpectralNormError(f"power iteration did not converge in {max_iters} iterations", last)
    return float(best)


def lp_ball_project(v, center, p, eps) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{u : ||u - center||_p <= eps}``, p in {2, inf}."""
    v = np.asarray(v, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    p = float(p)
    delta = v - center
    if p == INF:
        return center + np.clip(delta, -eps, eps)
    if p == 2.0:
        norm = math.sqrt(np.dot(delta.ravel(), delta.ravel()))
        if norm <= eps:
            return v.copy()
        return center + delta * (eps / norm)
    raise ValueError(f"projection supports p in {{2, inf}} only, got {p}")
