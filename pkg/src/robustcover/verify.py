"""Empirical checks of the covering lemmas on concrete instances.

Lemma checks use the exhaustive grid oracle, whose maximum is a true maximum
over the grid. Every inequality carries an explicit slack (Lipschitz bound
times grid reach) and an absolute tolerance of 1e-9. A check with zero samples
never passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attack import (AttackConfig, PerturbationSet, exact_attack_grid, grid_slack, pgd_attack)
from .covers import (MaureyCoverElement, UniformCoverSpec, composed_radius, epsilon_allocation,
                     maurey_cover_params, maurey_expectation_bound, maurey_round,
                     sample_cover_instance, single_rounding_sq_residual)
from .linalg import entrywise_p_norm, spectral_norm
from .network import Network, layer_outputs, loss_value
from .rng import as_key

TOL = 1e-9


@dataclass
class CheckReport:
    name: str
    samples: int
    violations: int
    max_excess: float          # max over samples of lhs - rhs - slack (<= tol means pass)
    slack: float
    tolerance: float = TOL
    oracle: str = "grid"
    oracle_resolution: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.samples > 0 and self.violations == 0 and not self.details.get("failed_layer")

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "samples": self.samples,
               "violations": self.violations, "max_excess": self.max_excess, "slack": self.slack,
               "tolerance": self.tolerance, "oracle": self.oracle,
               "oracle_resolution": self.oracle_resolution}
        out.update({k: v for k, v in self.details.items() if not isinstance(v, np.ndarray)})
        return out


def _robust(net, x, y, pset, loss, oracle, resolution, seed):
    if oracle == "grid":
        return exact_attack_grid(net, x, y, pset, loss, resolution)
    if oracle == "pgd":
        return pgd_attack(net, x, y, pset, loss, AttackConfig(seed=seed))
    raise ValueError(f"unknown oracle {oracle!r}")


def intermediate_example(net1, net2, x, y, pset, loss, oracle="grid", resolution=201, seed=0):
    """``(h~1, h~2, x')`` with ``x'`` the maximiser of whichever robust loss is larger."""
    r1 = _robust(net1, x, y, pset, loss, oracle, resolution, as_key(seed).derive("net", 1))
    r2 = _robust(net2, x, y, pset, loss, oracle, resolution, as_key(seed).derive("net", 2))
    x_mid = r1.x_adv if r1.loss_achieved >= r2.loss_achieved else r2.x_adv
    return r1.loss_achieved, r2.loss_achieved, x_mid


def check_intermediate_adv_example(net1: Network, net2: Network, X, Y, pset: PerturbationSet, loss,
                                   oracle_resolution: int = 201, oracle: str = "grid",
                                   robust_override=None, seed=0) -> CheckReport:
    """``|h~1 - h~2| <= |h1(x') - h2(x')| + slack`` at every data point.

    ``robust_override=(vals1, vals2)`` replaces the oracle with given robust
    values and uses the clean point as ``x'`` (negative-control fixtures).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(Y, dtype=np.int64))
    if X.shape[1] != net1.input_dim or net1.input_dim != net2.input_dim:
        raise ValueError("both networks must accept the data dimension")
    if oracle == "grid" and robust_override is None and X.shape[1] > 3:
        raise ValueError("grid oracle needs input dimension <= 3")
    slack = 0.0
    if robust_override is None and oracle == "grid":
        slack = max(grid_slack(net1, loss, pset, oracle_resolution),
                    grid_slack(net2, loss, pset, oracle_resolution))
    excess, lhs_all, rhs_all = [], [], []
    key = as_key(seed)
    for t, (x, y) in enumerate(zip(X, Y)):
        if robust_override is not None:
            h1, h2, x_mid = float(robust_override[0][t]), float(robust_override[1][t]), x
        else:
            h1, h2, x_mid = intermediate_example(net1, net2, x, int(y), pset, loss, oracle,
                                                 oracle_resolution, key.derive("point", t))
        lhs = abs(h1 - h2)
        rhs = abs(loss_value(net1, x_mid, int(y), loss) - loss_value(net2, x_mid, int(y), loss))
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        excess.append(lhs - rhs - slack)
    excess = np.asarray(excess)
    return CheckReport("intermediate_adversarial_example", len(X), int(np.sum(excess > TOL)),
                       float(excess.max()) if len(excess) else -math.inf, slack,
                       oracle="override" if robust_override is not None else oracle,
                       oracle_resolution=oracle_resolution if oracle == "grid" else 0,
                       details={"lhs": np.asarray(lhs_all), "rhs": np.asarray(rhs_all)})


def _same_architecture(net1, net2):
    if net1.widths != net2.widths or net1.activations != net2.activations:
        raise ValueError("networks must share the architecture")


def check_layer_recursion(net1: Network, net2: Network, X_prime, eps_list: Optional[Sequence] = None
                          ) -> CheckReport:
    """Layer-by-layer ``Delta_{i+1} <= rho_i (||W_i||_sigma Delta_i + ||(W_i - W'_i) X^_{i-1}||)``.

    Each row of ``X_prime`` is checked on its own and the whole batch is
    checked as one data matrix (Frobenius norms). With ``eps_list`` the
    covered form ``Delta_{i+1} <= rho_i (||W_i||_sigma Delta_i + eps_i)`` is
    also checked on layers whose residual is within ``eps_i``.
    """
    _same_architecture(net1, net2)
    Xp = np.atleast_2d(np.asarray(X_prime, dtype=np.float64))
    L = net1.depth
    sig = [spectral_norm(W, tol=1e-13) for W in net1.weights]
    rho = net1.lipschitz_constants
    outs1 = [Xp] + layer_outputs(net1, Xp)
    outs2 = [Xp] + layer_outputs(net2, Xp)
    deltas = np.zeros((len(Xp), L + 1))
    excess = []
    covered_checked = 0

    def inner_norm(M):
        return np.sqrt((M * M).sum(axis=1))

    for i in range(L):
        W1, W2 = net1.weights[i], net2.weights[i]
        deltas[:, i + 1] = inner_norm(outs1[i + 1] - outs2[i + 1])
        pre_gap = inner_norm(outs1[i] @ W1.T - outs2[i] @ W2.T)
        resid = inner_norm(outs2[i] @ (W1 - W2).T)
        rhs = rho[i] * (sig[i] * deltas[:, i] + resid)
        excess.extend(deltas[:, i + 1] - rho[i] * pre_gap)
        excess.extend(rho[i] * pre_gap - rhs)
        # whole batch as one data matrix
        D_next = math.sqrt((deltas[:, i + 1] ** 2).sum())
        D_prev = math.sqrt((deltas[:, i] ** 2).sum())
        R = math.sqrt((resid ** 2).sum())
        excess.append(D_next - rho[i] * (sig[i] * D_prev + R))
        if eps_list is not None and R <= eps_list[i]:
            covered_checked += 1
            excess.append(D_next - rho[i] * (sig[i] * D_prev + eps_list[i]))
    excess = np.asarray(excess)
    return CheckReport("layer_recursion", len(Xp), int(np.sum(excess > TOL)), float(excess.max()), 0.0,
                       oracle="none", details={"deltas": deltas, "covered_layers_checked": covered_checked,
                                               "spectral_norms": sig})


def cover_residuals(net1: Network, cover_net: Network, X_prime) -> list:
    """``||(W_i - W'_i) X^_{i-1}||_F`` with ``X^`` the cover network's layer inputs."""
    Xp = np.atleast_2d(np.asarray(X_prime, dtype=np.float64))
    ins = [Xp] + layer_outputs(cover_net, Xp)[:-1]
    return [float(np.linalg.norm(ins[i] @ (W1 - W2).T))
            for i, (W1, W2) in enumerate(zip(net1.weights, cover_net.weights))]


def check_final_cover_distance(net1: Network, cover_net: Network, X, Y, pset: PerturbationSet, loss,
                               eps_list: Sequence[float], rho: Optional[float] = None,
                               c: Optional[Sequence[float]] = None, oracle_resolution: int = 201
                               ) -> CheckReport:
    """``||h~1(X, Y) - h~2(X, Y)||_2 <= rho sum_j eps_j rho_j prod_{l>j} rho_l c_l``.

    Robust losses come from the grid oracle and ``x'`` from the intermediate
    rule. The per-layer residuals at ``x'`` must be within ``eps_j`` first;
    otherwise the report names the failing layer.
    """
    _same_architecture(net1, cover_net)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(Y, dtype=np.int64))
    rho = loss.logit_lipschitz if rho is None else rho
    c = [spectral_norm(W, tol=1e-13) for W in net1.weights] if c is None else list(c)
    h1, h2, Xmid = [], [], []
    for x, y in zip(X, Y):
        a, b, xm = intermediate_example(net1, cover_net, x, int(y), pset, loss, "grid", oracle_resolution)
        h1.append(a)
        h2.append(b)
        Xmid.append(xm)
    Xmid = np.asarray(Xmid)
    resid = cover_residuals(net1, cover_net, Xmid)
    failed = [i + 1 for i, (r, e) in enumerate(zip(resid, eps_list)) if r > e * (1 + 1e-12)]
    slack = math.sqrt(len(X)) * max(grid_slack(net1, loss, pset, oracle_resolution),
                                    grid_slack(cover_net, loss, pset, oracle_resolution))
    lhs = float(np.linalg.norm(np.asarray(h1) - np.asarray(h2)))
    radius = composed_radius(list(eps_list), net1.lipschitz_constants, c, rho)
    excess = lhs - radius - slack
    details = {"lhs": lhs, "radius": radius, "residuals": resid, "eps_list": list(eps_list)}
    if failed:
        details["failed_layer"] = failed[0]
    return CheckReport("final_cover_distance", len(X), int(excess > TOL), excess, slack,
                       oracle_resolution=oracle_resolution, details=details)


@dataclass
class CoverNetwork:
    network: Network
    eps_list: list
    k_list: list
    elements: list
    rounds: int
    converged: bool


def build_cover_network(net: Network, X, Y, pset: PerturbationSet, loss, eps_target: float,
                        oracle_resolution: int = 201, restarts: int = 64, seed=0,
                        max_rounds: int = 8) -> CoverNetwork:
    """Per-layer Maurey cover elements ``W'_i`` approximating ``net`` on the data.

    Radii come from :func:`epsilon_allocation` with ``s_i`` the spectral and
    ``a_i`` the l1 norms of ``net``. Each ``W'_i`` is rounded against a pool
    of layer inputs (clean data and intermediate adversarial examples found so
    far) with ``k_i = ceil(a_i^2 ||pool||_F^2 / eps_i^2)``, so its residual on
    any subset of the pool stays within ``eps_i``. Rounds repeat until the
    intermediate examples of the finished cover network meet every radius.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(Y, dtype=np.int64))
    s = [spectral_norm(W) for W in net.weights]
    a = [entrywise_p_norm(W, 1) for W in net.weights]
    rho = loss.logit_lipschitz
    eps_list = epsilon_allocation(s, a, net.lipschitz_constants, rho, eps_target)
    pools = [X]
    pools.append(np.array([exact_attack_grid(net, x, int(y), pset, loss, oracle_resolution).x_adv
                           for x, y in zip(X, Y)]))
    key = as_key(seed)
    cover = None
    for rnd in range(max_rounds):
        pool = np.vstack(pools)
        weights, ks, elements = [], [], []
        inputs = pool
        for i, W in enumerate(net.weights):
            b = float(np.linalg.norm(inputs))
            k = max(1, math.ceil((a[i] * b / eps_list[i]) ** 2)) if a[i] > 0 else 1
            elem, _ = maurey_round(W, inputs.T, a[i], k, restarts, key.derive("round", rnd).derive("layer", i))
            Wc = elem.matrix()
            weights.append(Wc)
            ks.append(k)
            elements.append(elem)
            inputs = net.activations[i](inputs @ Wc.T)
        cover = net.with_weights(weights)
        Xmid = np.array([intermediate_example(net, cover, x, int(y), pset, loss, "grid",
                                              oracle_resolution)[2] for x, y in zip(X, Y)])
        resid = cover_residuals(net, cover, Xmid)
        if all(r <= e for r, e in zip(resid, eps_list)):
            return CoverNetwork(cover, eps_list, ks, elements, rnd + 1, True)
        pools.append(Xmid)
    return CoverNetwork(cover, eps_list, ks, elements, max_rounds, False)


@dataclass
class StatsReport:
    instances: int
    trials: int
    k: int
    means: np.ndarray
    stderrs: np.ndarray
    bounds: np.ndarray

    @property
    def failures(self) -> int:
        return int(np.sum(self.means > self.bounds + 3.0 * self.stderrs))

    @property
    def passed(self) -> bool:
        return self.instances > 0 and self.failures == 0

    def to_dict(self) -> dict:
        return {"instances": self.instances, "trials": self.trials, "k": self.k,
                "failures": self.failures, "passed": self.passed,
                "max_mean_over_bound": float(np.max(self.means - self.bounds))}


def maurey_residual_stats(W, X, a, b, k, trials, seed=0):
    """Mean and stderr of the single-rounding squared residual, plus the Maurey bound."""
    key = as_key(seed)
    vals = np.array([single_rounding_sq_residual(W, X, a, k, key.derive("trial", t))
                     for t in range(trials)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials)), \
        maurey_expectation_bound(W, X, a, b, k)


def check_maurey_residual_stats(spec: UniformCoverSpec, trials: int = 400, seed=0, instances: int = 20,
                                k: Optional[int] = None, n_cols: int = 4) -> StatsReport:
    """Per instance: mean squared residual <= (alpha (ab)^2 - ||u||^2)/k + 3 stderr."""
    k = maurey_cover_params(spec)[0] if k is None else k
    key = as_key(seed)
    means, errs, bnds = [], [], []
    for i in range(instances):
        W, X = sample_cover_instance(spec, key.derive("instance", i), i % 2 == 0, n_cols)
        m, e, bound = maurey_residual_stats(W, X, spec.a, spec.b, k, trials, key.derive("stats", i))
        means.append(m)
        errs.append(e)
        bnds.append(bound)
    return StatsReport(instances, trials, k, np.array(means), np.array(errs), np.array(bnds))
