"""Toy datasets, SGD / PGD adversarial training and robust risk measurement."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attack import AttackConfig, PerturbationSet, fgsm_batch, pgd_batch
from .network import Network, _other_argmax, backprop, forward, loss_value, margins, ramp_margin
from .rng import as_key


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussian_blobs"
    n_train: int = 200
    n_test: int = 200
    seed: int = 0
    B: float = 1.0
    classes: int = 2
    d: int = 2
    spread: float = 0.3
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in ("gaussian_blobs", "two_moons"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n_train < 1 or self.n_test < 0:
            raise ValueError("need n_train >= 1 and n_test >= 0")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if self.kind == "two_moons" and (self.classes != 2 or self.d != 2):
            raise ValueError("two_moons is a 2-class, 2-d dataset")
        if self.classes < 2 or self.d < 1 or self.spread < 0 or self.noise < 0:
            raise ValueError("need classes >= 2, d >= 1, spread >= 0, noise >= 0")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    classes: int

    def __len__(self):
        return len(self.y)


def _balanced_labels(n, k, gen):
    return gen.permutation(np.arange(n) % k)


def _blob_centers(k, d):
    if d == 1:
        return np.linspace(-1.0, 1.0, k)[:, None]
    angles = 2.0 * math.pi * np.arange(k) / k
    C = np.zeros((k, d))
    C[:, 0], C[:, 1] = np.cos(angles), np.sin(angles)
    return C


def _draw(spec: DatasetSpec, n, gen):
    y = _balanced_labels(n, spec.classes, gen)
    if spec.kind == "gaussian_blobs":
        X = _blob_centers(spec.classes, spec.d)[y] + spec.spread * gen.standard_normal((n, spec.d))
    else:
        t = gen.uniform(0.0, math.pi, n)
        X = np.where(y[:, None] == 0,
                     np.stack([np.cos(t), np.sin(t)], axis=1),
                     np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1))
        X = X + spec.noise * gen.standard_normal((n, 2))
    return X, y


def make_dataset(spec: DatasetSpec):
    """``(train, test)`` rescaled jointly so that the largest l2 norm is exactly ``B``."""
    key = as_key(spec.seed)
    Xtr, ytr = _draw(spec, spec.n_train, key.derive("split", 0).generator())
    Xte, yte = _draw(spec, spec.n_test, key.derive("split", 1).generator())
    norms = np.linalg.norm(np.vstack([Xtr, Xte]), axis=1)
    top = norms.max()
    if top > 0:
        Xtr, Xte = Xtr * (spec.B / top), Xte * (spec.B / top)
        # clip rounding overshoot so ||x|| <= B holds exactly
        for X in (Xtr, Xte):
            nx = np.linalg.norm(X, axis=1)
            over = nx > spec.B
            X[over] *= (spec.B / nx[over])[:, None]
    return Dataset(Xtr, ytr, spec.classes), Dataset(Xte, yte, spec.classes)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.1
    gamma: float = 1.0
    pset: Optional[PerturbationSet] = None
    attack: AttackConfig = AttackConfig(steps=10, restarts=1)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or not self.gamma > 0:
            raise ValueError("need epochs >= 0, batch_size >= 1, lr >= 0, gamma > 0")


def hinge_margin_loss(logits, y, gamma):
    """``max(0, 1 - M/gamma)``: the ramp without its upper clip, used as the training surrogate."""
    return np.maximum(0.0, 1.0 - margins(logits, y) / gamma)


def _hinge_dlogits(logits, y, gamma, scale):
    rows = np.arange(len(y))
    j = _other_argmax(logits, y)
    t = logits[rows, y] - logits[rows, j]
    coef = np.where(t < gamma, -scale / gamma, 0.0)
    g = np.zeros_like(logits)
    g[rows, y] += coef
    g[rows, j] -= coef
    return g


def adversarial_train(net: Network, train: Dataset, cfg: TrainConfig, loss=None) -> Network:
    """Plain constant-step SGD; with ``cfg.pset`` each batch is replaced by PGD examples first.

    The attack maximises ``loss`` (defaults to the ramp at ``cfg.gamma``) and
    is treated as a constant when differentiating w.r.t. the weights.
    """
    loss = ramp_margin(cfg.gamma) if loss is None else loss
    key = as_key(cfg.seed)
    weights = [W.copy() for W in net.weights]
    n = len(train)
    for epoch in range(cfg.epochs):
        order = key.derive("epoch", epoch).generator().permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            cur = net.with_weights(weights)
            Xb, yb = train.X[idx], train.y[idx]
            if cfg.pset is not None and cfg.pset.eps > 0:
                acfg = AttackConfig(cfg.attack.steps, cfg.attack.step_size, cfg.attack.restarts,
                                    key.derive("epoch", epoch).derive("batch", b))
                Xb, _ = pgd_batch(cur, Xb, yb, cfg.pset, loss, acfg)
            logits, _, dWs = backprop(cur, Xb, lambda lg: _hinge_dlogits(lg, yb, cfg.gamma, 1.0 / len(idx)))
            total += float(hinge_margin_loss(logits, yb, cfg.gamma).sum())
            weights = [W - cfg.lr * dW for W, dW in zip(weights, dWs)]
            if not (math.isfinite(total) and all(np.all(np.isfinite(W)) for W in weights)):
                raise TrainingDiverged(epoch)
    return net.with_weights(weights)


def robust_risk_eval(net: Network, data: Dataset, pset: PerturbationSet, cfg: AttackConfig, loss,
                     method: str = "pgd"):
    """``(clean_risk, robust_risk)``: mean loss before and after the attack."""
    clean = np.atleast_1d(loss_value(net, data.X, data.y, loss))
    if method == "pgd":
        _, robust = pgd_batch(net, data.X, data.y, pset, loss, cfg)
    elif method == "fgsm":
        _, robust = fgsm_batch(net, data.X, data.y, pset, loss)
    else:
        raise ValueError(f"unknown attack method {method!r}")
    return float(clean.mean()), float(np.maximum(robust, clean).mean())


def train_error(net: Network, data: Dataset) -> float:
    return float(np.mean(margins(forward(net, data.X), data.y) <= 0))
