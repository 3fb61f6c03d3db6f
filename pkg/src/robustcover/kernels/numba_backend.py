"""``@njit`` kernels; same contracts as :mod:`numpy_backend`."""
import math

import numpy as np

from .._accel import njit


@njit
def _act(z, code, slope):
    if code == 1:
        return z if z > 0.0 else 0.0
    if code == 2:
        return z if z > 0.0 else slope * z
    if code == 3:
        return math.tanh(z)
    return z


@njit
def mlp_logits(flat, offsets, shapes, codes, slopes, X):
    # layer-major with the point index innermost so the loops vectorise
    n = X.shape[0]
    L = shapes.shape[0]
    A = np.ascontiguousarray(X.T)
    for layer in range(L):
        rows = shapes[layer, 0]
        cols = shapes[layer, 1]
        base = offsets[layer]
        code = codes[layer]
        slope = slopes[layer]
        Z = np.zeros((rows, n))
        for r in range(rows):
            zr = Z[r]
            for c in range(cols):
                w = flat[base + r * cols + c]
                ac = A[c]
                for p in range(n):
                    zr[p] += w * ac[p]
            for p in range(n):
                zr[p] = _act(zr[p], code, slope)
        A = Z
    return np.ascontiguousarray(A.T)


@njit
def mlp_margins(flat, offsets, shapes, codes, slopes, X, y):
    logits = mlp_logits(flat, offsets, shapes, codes, slopes, X)
    n, k = logits.shape
    out = np.empty(n)
    for p in range(n):
        best = -np.inf
        for j in range(k):
            if j != y[p] and logits[p, j] > best:
                best = logits[p, j]
        out[p] = logits[p, y[p]] - best
    return out


@njit
def greedy_maurey(G, K, step, k):
    G = G.copy()
    m, d = G.shape
    counts = np.zeros((m, d, 2), dtype=np.int64)
    zero_picks = 0
    s2 = step * step
    for _ in range(k):
        best_gain = 0.0
        bi = -1
        bj = -1
        bs = -1
        for i in range(m):
            for j in range(d):
                base = s2 * K[j, j]
                gp = 2.0 * step * G[i, j] - base
                if gp > best_gain:
                    best_gain, bi, bj, bs = gp, i, j, 0
                gn = -2.0 * step * G[i, j] - base
                if gn > best_gain:
                    best_gain, bi, bj, bs = gn, i, j, 1
        if bi < 0:
            zero_picks += 1
            continue
        g = 1.0 if bs == 0 else -1.0
        counts[bi, bj, bs] += 1
        for c in range(d):
            G[bi, c] -= step * g * K[bj, c]
    return counts, zero_picks


@njit
def greedy_set_cover(adjacency):
    n = adjacency.shape[0]
    uncovered = np.ones(n, dtype=np.bool_)
    remaining = n
    centers = []
    while remaining > 0:
        best = -1
        best_gain = -1
        for c in range(n):
            gain = 0
            for q in range(n):
                if uncovered[q] and adjacency[c, q]:
                    gain += 1
            if gain > best_gain:
                best_gain = gain
                best = c
        centers.append(best)
        for q in range(n):
            if uncovered[q] and adjacency[best, q]:
                uncovered[q] = False
                remaining -= 1
    out = np.empty(len(centers), dtype=np.int64)
    for t in range(len(centers)):
        out[t] = centers[t]
    return out
