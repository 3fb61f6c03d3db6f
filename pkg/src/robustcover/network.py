"""Feedforward networks ``f(x) = s_L(W_L s_{L-1}(... s_1(W_1 x)))``, margins and losses.

Inputs are rows: a batch is an ``(n, d)`` array and the logits are ``(n, k)``.
Single inputs may be passed as 1-D vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .linalg import as_matrix, spectral_norm

_KINDS = {"identity": kernels.ACT_IDENTITY, "relu": kernels.ACT_RELU,
          "leaky_relu": kernels.ACT_LEAKY_RELU, "tanh": kernels.ACT_TANH}


@dataclass(frozen=True)
class Activation:
    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {sorted(_KINDS)}")
        if self.kind == "leaky_relu" and not math.isfinite(self.slope):
            raise ValueError("leaky_relu slope must be finite")

    @property
    def code(self) -> int:
        return _KINDS[self.kind]

    @property
    def lipschitz(self) -> float:
        if self.kind == "leaky_relu":
            return max(1.0, abs(self.slope))
        return 1.0

    def __call__(self, z):
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, z, self.slope * z)
        if self.kind == "tanh":
            return np.tanh(z)
        return np.asarray(z, dtype=np.float64)

    def derivative(self, z):
        # kinks take the value from the z <= 0 side: relu'(0) = 0
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.slope)
        if self.kind == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        return np.ones_like(z, dtype=np.float64)


def activation(kind: str, slope: float = 0.0, lipschitz: Optional[float] = None) -> Activation:
    act = Activation(kind, slope)
    if lipschitz is not None and abs(float(lipschitz) - act.lipschitz) > 1e-12:
        raise ValueError(f"lipschitz={lipschitz} inconsistent with {kind} (expected {act.lipschitz})")
    return act


@dataclass(frozen=True, eq=False)
class Network:
    weights: tuple
    activations: tuple

    def __post_init__(self):
        if len(self.weights) == 0:
            raise ValueError("a network needs at least one layer")
        if len(self.weights) != len(self.activations):
            raise ValueError("one activation per layer is required")
        ws = []
        for i, W in enumerate(self.weights):
            W = as_matrix(W).copy()
            W.setflags(write=False)
            if i > 0 and W.shape[1] != ws[-1].shape[0]:
                raise ValueError(f"layer {i + 1} expects input width {W.shape[1]}, "
                                 f"previous layer outputs {ws[-1].shape[0]}")
            ws.append(W)
        acts = tuple(a if isinstance(a, Activation) else Activation(a) for a in self.activations)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "activations", acts)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def widths(self) -> tuple:
        """``(m_0, m_1, ..., m_L)`` with ``m_0 = d`` and ``m_L = k``."""
        return (self.input_dim,) + tuple(W.shape[0] for W in self.weights)

    @property
    def lipschitz_constants(self) -> tuple:
        return tuple(a.lipschitz for a in self.activations)

    @cached_property
    def packed(self):
        flat = np.concatenate([W.ravel() for W in self.weights])
        sizes = [W.size for W in self.weights]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        shapes = np.array([W.shape for W in self.weights], dtype=np.int64)
        codes = np.array([a.code for a in self.activations], dtype=np.int64)
        slopes = np.array([a.slope for a in self.activations], dtype=np.float64)
        return flat, offsets, shapes, codes, slopes

    def with_weights(self, weights: Sequence[np.ndarray]) -> "Network":
        return Network(tuple(weights), self.activations)

    def spectral_norms(self) -> list:
        return [spectral_norm(W) for W in self.weights]


def _as_batch(net: Network, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"input has dimension {X.shape[-1]}, network expects {net.input_dim}")
    return X, single


def forward(net: Network, x) -> np.ndarray:
    X, single = _as_batch(net, x)
    out = kernels.active.mlp_logits(*net.packed, np.ascontiguousarray(X))
    return out[0] if single else out


def layer_outputs(net: Network, x) -> list:
    """Outputs after each layer (activation applied), last entry equals ``forward``."""
    X, single = _as_batch(net, x)
    outs, A = [], X
    for W, act in zip(net.weights, net.activations):
        A = act(A @ W.T)
        outs.append(A[0] if single else A)
    return outs


def _other_argmax(logits, y):
    others = np.array(logits, dtype=np.float64, copy=True)
    rows = np.arange(others.shape[0])
    others[rows, y] = -np.inf
    return np.argmax(others, axis=1)


def margins(logits, y) -> np.ndarray:
    """Row-wise ``f_y - max_{j != y} f_j``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (logits.shape[0],))
    if logits.shape[1] < 2:
        raise ValueError("margins need at least two classes")
    rows = np.arange(logits.shape[0])
    j = _other_argmax(logits, y)
    return logits[rows, y] - logits[rows, j]


def margin(logits, y: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= y < logits.shape[0]:
        raise ValueError(f"label {y} out of range for {logits.shape[0]} classes")
    return float(margins(logits[None, :], [y])[0])


def ramp_loss(t, gamma):
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    t = np.asarray(t, dtype=np.float64)
    out = np.clip(1.0 - t / gamma, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def ramp_slope(t, gamma):
    """d/dt of the ramp: -1/gamma strictly inside (0, gamma), 0 elsewhere."""
    t = np.asarray(t, dtype=np.float64)
    return np.where((t > 0.0) & (t < gamma), -1.0 / gamma, 0.0)


@dataclass(frozen=True)
class RampLoss:
    """``phi_gamma(M(f(x), y))``; 1/gamma-Lipschitz in the margin, 2/gamma in the logits."""
    gamma: float
    name: str = field(default="ramp_margin", init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def logit_lipschitz(self) -> float:
        return 2.0 / self.gamma

    @property
    def margin_monotone(self) -> bool:
        return True

    def values(self, logits, y):
        return ramp_loss(margins(logits, y), self.gamma)

    def grad_logits(self, logits, y):
        logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (logits.shape[0],))
        rows = np.arange(logits.shape[0])
        j = _other_argmax(logits, y)
        t = logits[rows, y] - logits[rows, j]
        slope = ramp_slope(t, self.gamma)
        g = np.zeros_like(logits)
        g[rows, y] += slope
        g[rows, j] -= slope
        return g


@dataclass(frozen=True)
class LipschitzLoss:
    """User loss ``fn(logits (n, k), y (n,)) -> (n,)``, clamped to [0, 1].

    ``rho`` is the declared Lipschitz constant w.r.t. the l2 norm of the
    logits; it is trusted (see :func:`probe_lipschitz`). Without ``grad`` the
    logit gradient is taken by central differences.
    """
    fn: Callable
    rho: float
    grad: Optional[Callable] = None
    name: str = field(default="custom_lipschitz", init=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def logit_lipschitz(self) -> float:
        return float(self.rho)

    @property
    def margin_monotone(self) -> bool:
        return False

    def values(self, logits, y):
        logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (logits.shape[0],))
        return np.clip(np.asarray(self.fn(logits, y), dtype=np.float64), 0.0, 1.0)

    def grad_logits(self, logits, y):
        logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (logits.shape[0],))
        if self.grad is not None:
            return np.asarray(self.grad(logits, y), dtype=np.float64)
        h = 1e-6
        g = np.zeros_like(logits)
        for c in range(logits.shape[1]):
            step = np.zeros_like(logits)
            step[:, c] = h
            g[:, c] = (self.values(logits + step, y) - self.values(logits - step, y)) / (2 * h)
        return g


def ramp_margin(gamma: float) -> RampLoss:
    return RampLoss(float(gamma))


def custom_lipschitz(fn, rho, grad=None) -> LipschitzLoss:
    return LipschitzLoss(fn, float(rho), grad)


def probe_lipschitz(loss, k: int, trials: int = 1000, seed: int = 0, scale: float = 3.0) -> float:
    """Largest observed ``|l(u) - l(v)| / ||u - v||_2`` over random logit pairs."""
    rng = np.random.default_rng(seed)
    U = scale * rng.standard_normal((trials, k))
    V = U + 0.1 * rng.standard_normal((trials, k))
    y = rng.integers(0, k, size=trials)
    num = np.abs(loss.values(U, y) - loss.values(V, y))
    return float(np.max(num / np.linalg.norm(U - V, axis=1)))


def loss_value(net: Network, x, y, loss):
    X, single = _as_batch(net, x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
    if isinstance(loss, RampLoss):
        t = kernels.active.mlp_margins(*net.packed, np.ascontiguousarray(X), np.ascontiguousarray(y))
        vals = ramp_loss(t, loss.gamma)
    else:
        vals = loss.values(forward(net, X), y)
    vals = np.atleast_1d(vals)
    return float(vals[0]) if single else vals


def margin_value(net: Network, x, y):
    X, single = _as_batch(net, x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
    t = kernels.active.mlp_margins(*net.packed, np.ascontiguousarray(X), np.ascontiguousarray(y))
    return float(t[0]) if single else t


def backprop(net: Network, X, dlogits_fn, want_weights=True):
    """Reverse pass on a batch.

    ``dlogits_fn(logits)`` returns dLoss/dlogits (n, k) for the summed batch
    loss. Returns ``(logits, dX, dWs)``; ``dWs`` is None unless requested.
    """
    X = np.asarray(X, dtype=np.float64)
    pre, post = [], [X]
    A = X
    for W, act in zip(net.weights, net.activations):
        Z = A @ W.T
        A = act(Z)
        pre.append(Z)
        post.append(A)
    logits = A
    dA = dlogits_fn(logits)
    dWs = [None] * net.depth if want_weights else None
    for layer in range(net.depth - 1, -1, -1):
        dZ = dA * net.activations[layer].derivative(pre[layer])
        if want_weights:
            dWs[layer] = dZ.T @ post[layer]
        dA = dZ @ net.weights[layer]
    return logits, dA, dWs


def loss_grad_input(net: Network, x, y, loss) -> np.ndarray:
    X, single = _as_batch(net, x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
    _, dX, _ = backprop(net, X, lambda logits: loss.grad_logits(logits, y), want_weights=False)
    return dX[0] if single else dX


def margin_grad_input(net: Network, x, y) -> np.ndarray:
    """Gradient of ``M(f(x), y)`` w.r.t. the input (other-class ties: lowest index)."""
    X, single = _as_batch(net, x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))

    def dlogits(logits):
        rows = np.arange(logits.shape[0])
        j = _other_argmax(logits, y)
        g = np.zeros_like(logits)
        g[rows, y] += 1.0
        g[rows, j] -= 1.0
        return g

    _, dX, _ = backprop(net, X, dlogits, want_weights=False)
    return dX[0] if single else dX


def lipschitz_bound(net: Network, loss) -> float:
    """Global l2-Lipschitz constant of ``x -> loss(f(x), y)``: rho_loss * prod rho_i ||W_i||_sigma."""
    value = loss.logit_lipschitz
    for W, act in zip(net.weights, net.activations):
        value *= act.lipschitz * spectral_norm(W)
    return float(value)


def random_network(widths: Sequence[int], key, kind: str = "relu", scale: float = 1.0,
                   slope: float = 0.0) -> Network:
    """Gaussian weights with entries ``N(0, scale^2 / fan_in)``; identity on the last layer."""
    from .rng import as_key
    key = as_key(key)
    weights, acts = [], []
    for i in range(len(widths) - 1):
        fan_in = widths[i]
        W = key.derive("layer", i).generator().standard_normal((widths[i + 1], fan_in))
        weights.append(W * scale / math.sqrt(fan_in))
        last = i == len(widths) - 2
        acts.append(Activation("identity") if last else Activation(kind, slope))
    return Network(tuple(weights), tuple(acts))
