"""Reference (vectorised numpy) kernels."""
import numpy as np

# activation codes, mirrored in kernels/__init__.py
_IDENTITY, _RELU, _LEAKY, _TANH = 0, 1, 2, 3


def _activate(z, code, slope):
    if code == _RELU:
        return np.maximum(z, 0.0)
    if code == _LEAKY:
        return np.where(z > 0.0, z, slope * z)
    if code == _TANH:
        return np.tanh(z)
    return z


def mlp_logits(flat, offsets, shapes, codes, slopes, X):
    """Forward pass of a packed MLP on the rows of ``X`` (n, d) -> (n, k)."""
    A = np.asarray(X, dtype=np.float64)
    for layer in range(shapes.shape[0]):
        rows, cols = shapes[layer]
        W = flat[offsets[layer]:offsets[layer] + rows * cols].reshape(rows, cols)
        A = _activate(A @ W.T, codes[layer], slopes[layer])
    return A


def mlp_margins(flat, offsets, shapes, codes, slopes, X, y):
    logits = mlp_logits(flat, offsets, shapes, codes, slopes, X)
    n = logits.shape[0]
    rows = np.arange(n)
    correct = logits[rows, y]
    others = logits.copy()
    others[rows, y] = -np.inf
    return correct - others.max(axis=1)


def greedy_maurey(G, K, step, k):
    """Frank-Wolfe style greedy selection of ``k`` scaled basis units.

    ``G`` is ``W X X^T`` (m, d) and ``K`` is ``X X^T`` (d, d). Each step adds
    ``step * g * e_i e_j^T`` (or nothing, for the zero pseudo-element) so as to
    minimise the Frobenius residual; ties go to the lowest canonical index
    ``2 * (i * d + j) + (g == -1)``. Returns per-basis counts (m, d, 2) and the
    number of zero picks.
    """
    G = np.array(G, dtype=np.float64)
    m, d = G.shape
    diag = np.diag(K).copy()
    counts = np.zeros((m, d, 2), dtype=np.int64)
    zero_picks = 0
    for _ in range(k):
        gain_pos = 2.0 * step * G - step * step * diag[None, :]
        gain_neg = -2.0 * step * G - step * step * diag[None, :]
        gains = np.stack([gain_pos, gain_neg], axis=-1).ravel()
        best = int(np.argmax(gains))
        if not gains[best] > 0.0:
            zero_picks += 1
            continue
        i, rem = divmod(best, 2 * d)
        j, s = divmod(rem, 2)
        g = 1.0 if s == 0 else -1.0
        counts[i, j, s] += 1
        G[i, :] -= step * g * K[j, :]
    return counts, zero_picks


def greedy_set_cover(adjacency):
    """Greedy set cover where point ``c`` covers row ``adjacency[c]``."""
    adjacency = np.asarray(adjacency, dtype=bool)
    uncovered = np.ones(adjacency.shape[0], dtype=bool)
    centers = []
    while uncovered.any():
        gain = (adjacency & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        centers.append(c)
        uncovered &= ~adjacency[c]
    return np.asarray(centers, dtype=np.int64)
