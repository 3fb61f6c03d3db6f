"""Acceptance criteria 1-11 at their stated tolerances.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion is reported rather than hidden.
"""
import itertools
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from robustcover.attack import PerturbationSet, random_start
from robustcover.bounds import b_tilde, dudley_closed_form_quadratic, dudley_value, linear_sandwich
from robustcover.cli import main
from robustcover.covers import UniformCoverSpec, adversarial_cover_bound, maurey_cover_params, uniform_cover_verify
from robustcover.linalg import INF
from robustcover.network import random_network, ramp_margin
from robustcover.rademacher import linear_class, mc_adversarial_rc, mc_standard_rc
from robustcover.rng import as_key
from robustcover.verify import (build_cover_network, check_final_cover_distance,
                                check_intermediate_adv_example, check_layer_recursion)

FIX = Path(__file__).parent / "fixtures"
LOSS = ramp_margin(0.5)


def record(num, ok, msg):
    ACCEPTANCE[num] = (bool(ok), msg)
    assert ok, msg


def test_c01_uniform_cover_suite():
    start = time.perf_counter()
    worst_rate, all_expect = 1.0, True
    for eps, d, m in itertools.product((0.5, 0.25), (1, 2, 3), (1, 2, 3)):
        rep = uniform_cover_verify(UniformCoverSpec(1.0, 1.0, eps, d, m), 1000, 64, seed=0)
        worst_rate = min(worst_rate, rep.success_rate)
        all_expect &= rep.expectation_ok
    elapsed = time.perf_counter() - start
    record(1, worst_rate >= 0.99 and all_expect and elapsed < 60,
           f"18 configs x 1000 samples: min success {worst_rate:.3f}, expectation ok {all_expect}, "
           f"{elapsed:.1f}s")


def test_c02_cover_count_bit_exact():
    gen = np.random.default_rng(2)
    mismatches = 0
    for _ in range(50):
        a, b, eps = gen.uniform(0.1, 5), gen.uniform(0.1, 5), gen.uniform(0.05, 2)
        d, m = int(gen.integers(1, 50)), int(gen.integers(1, 50))
        k, ln_card = maurey_cover_params(UniformCoverSpec(a, b, eps, d, m))
        exact = Fraction(a) ** 2 * Fraction(b) ** 2 / Fraction(eps) ** 2
        k_ref = -((-exact.numerator) // exact.denominator)
        mismatches += (k != k_ref) or (ln_card != k_ref * math.log(2 * d * m))
    record(2, mismatches == 0, f"50 random specs, {mismatches} mismatches against rational arithmetic")


def _pairs(count, label):
    for t in range(count):
        key = as_key(label).derive("pair", t)
        yield random_network([2, 8, 3], key.derive("a")), random_network([2, 8, 3], key.derive("b")), key


def test_c03_intermediate_adversarial_example():
    pset = PerturbationSet(INF, 0.3)
    start = time.perf_counter()
    violations = samples = 0
    worst = -math.inf
    for n1, n2, key in _pairs(500, 3):
        X = key.derive("x").generator().uniform(-1, 1, (4, 2))
        rep = check_intermediate_adv_example(n1, n2, X, np.arange(4) % 3, pset, LOSS, oracle_resolution=201)
        violations += rep.violations
        samples += rep.samples
        worst = max(worst, rep.max_excess)
    elapsed = time.perf_counter() - start
    record(3, violations == 0 and samples > 0 and elapsed < 600,
           f"500 pairs, {samples} points, {violations} violations beyond grid slack, "
           f"max excess {worst:.3g}, {elapsed:.1f}s")


def test_c04_layer_recursion():
    pset = PerturbationSet(INF, 0.3)
    violations = samples = 0
    for n1, n2, key in _pairs(500, 4):
        x = key.derive("x").generator().uniform(-1, 1, 2)
        Xp = np.array([random_start(x, pset, key.derive("xp", j)) for j in range(20)])
        rep = check_layer_recursion(n1, n2, Xp)
        violations += rep.violations
        samples += rep.samples
    record(4, violations == 0 and samples == 10_000,
           f"500 pairs x 20 x': {violations} violations at 1e-9")


def test_c05_end_to_end_cover_distance():
    pset = PerturbationSet(INF, 0.3)
    violations, ratios = 0, []
    for t in range(5):
        key = as_key(5).derive("net", t)
        net = random_network([2, 8, 3], key)
        X = key.derive("x").generator().uniform(-1, 1, (10, 2))
        Y = np.arange(10) % 3
        cov = build_cover_network(net, X, Y, pset, LOSS, 0.5, oracle_resolution=101, restarts=16, seed=key)
        rep = check_final_cover_distance(net, cov.network, X, Y, pset, LOSS, cov.eps_list, oracle_resolution=101)
        violations += (not rep.passed) or (not cov.converged)
        ratios.append(rep.details["lhs"] / rep.details["radius"])
    record(5, violations == 0, f"5 L=2 nets: {violations} failures, max lhs/radius {max(ratios):.3g}")


def test_c06_linear_sandwich():
    n, trials, lines, ok = 64, 400, [], True
    for d, p, eps in itertools.product((2, 5), (2.0, INF), (0.1, 0.5)):
        gen = as_key(6).derive("d", d).generator()
        X = gen.uniform(-1, 1, (n, d))
        y = np.where(gen.uniform(size=n) < 0.5, -1.0, 1.0)
        cls = linear_class(2.0, 1.0, attack=PerturbationSet(p, eps))
        std = mc_standard_rc(cls, X, y, trials, 0)
        adv = mc_adversarial_rc(cls, X, y, trials, 0)
        lo, hi = linear_sandwich(1.0, eps, p, 2.0, d, n, std.mean)
        ok &= lo - 3 * adv.stderr <= adv.mean <= hi + 3 * adv.stderr
        zero = linear_class(2.0, 1.0, attack=PerturbationSet(p, 0.0))
        ok &= np.array_equal(mc_adversarial_rc(zero, X, y, trials, 0).values,
                             mc_standard_rc(zero, X, y, trials, 0).values)
        lines.append(f"d={d},p={p},eps={eps}: {lo:.3f}<={adv.mean:.3f}<={hi:.3f}")
    record(6, ok, "; ".join(lines))


def test_c07_dudley_closed_form():
    worst = 0.0
    for R, n in itertools.product((0.1, 1.0, 10.0), (64, 1024)):
        num = dudley_value(lambda e: R / e ** 2, n).value
        worst = max(worst, abs(num - dudley_closed_form_quadratic(R, n)) / dudley_closed_form_quadratic(R, n))
    record(7, worst <= 1e-6, f"max relative error {worst:.2e}")


def _perturbations(p, eps, d, count, key):
    gen = key.generator()
    if p == INF:
        verts = np.array(list(itertools.product((-eps, eps), repeat=d)))
        rest = gen.uniform(-eps, eps, (count - len(verts), d))
        return np.vstack([verts, rest])
    U = gen.standard_normal((count, d))
    return eps * U / np.linalg.norm(U, axis=1, keepdims=True)


def test_c08_b_tilde():
    worst, B, eps = -math.inf, 1.0, 0.1
    for p, d in itertools.product((2.0, INF), (2, 5, 8)):
        key = as_key(8).derive("d", d)
        deltas = _perturbations(p, eps, d, 10_000, key)
        # worst-aligned data points: along the largest perturbations, plus random unit points
        X = deltas / np.linalg.norm(deltas, axis=1, keepdims=True) * B
        U = key.derive("x").generator().standard_normal((10_000, d))
        X2 = U / np.linalg.norm(U, axis=1, keepdims=True) * B
        measured = max(np.linalg.norm(X + deltas, axis=1).max(), np.linalg.norm(X2 + deltas, axis=1).max())
        worst = max(worst, measured - b_tilde(B, eps, p, d))
    record(8, worst <= 1e-12, f"max(||x'|| - B~) = {worst:.3g} over 10^4 perturbations per (p, d)")


def _profiles(count, uniform_width, seed):
    gen = np.random.default_rng(seed)
    for _ in range(count):
        L = int(gen.integers(1, 5))
        s = gen.uniform(0.3, 3.0, L)
        a = s * gen.uniform(1.0, 6.0, L)
        dims = [int(gen.integers(2, 12))] * (L + 1) if uniform_width else list(gen.integers(1, 12, L + 1))
        yield list(s), list(a), [1.0] * L, float(gen.uniform(0.5, 4)), dims, float(gen.uniform(1, 20)), \
            float(gen.uniform(0.05, 2))


def _monotone_ok(s, a, r, rho, dims, bn, eps):
    def unc(**kw):
        args = dict(s=s, a=a, bn=bn, eps=eps)
        args.update(kw)
        return adversarial_cover_bound(args["s"], args["a"], r, rho, dims, args["bn"], args["eps"]).unceiled
    grid = np.linspace(0.5, 2.0, 8)
    seqs = [[unc(eps=eps * g) for g in grid], [unc(bn=bn * g) for g in grid]]
    for i in range(len(s)):
        seqs.append([unc(s=[v * g if j == i else v for j, v in enumerate(s)]) for g in grid])
        seqs.append([unc(a=[v * g if j == i else v for j, v in enumerate(a)]) for g in grid])
    dec = all(x >= y * (1 - 1e-12) for x, y in zip(seqs[0], seqs[0][1:]))
    inc = all(x <= y * (1 + 1e-12) for seq in seqs[1:] for x, y in zip(seq, seq[1:]))
    return dec and inc


def test_c09_bound_plumbing():
    bad = 0
    for s, a, r, rho, dims, bn, eps in _profiles(20, True, 9):
        cb = adversarial_cover_bound(s, a, r, rho, dims, bn, eps)
        bad += abs(cb.assembled - cb.closed_form) > cb.ceiling_slack * (1 + 1e-12) + 1e-9 * cb.closed_form
        bad += not _monotone_ok(s, a, r, rho, dims, bn, eps)
    for s, a, r, rho, dims, bn, eps in _profiles(20, False, 10):
        cb = adversarial_cover_bound(s, a, r, rho, dims, bn, eps)
        bad += not (cb.unceiled <= cb.assembled <= cb.unceiled + cb.ceiling_slack * (1 + 1e-12))
        bad += cb.unceiled > cb.closed_form * (1 + 1e-12)
        bad += not _monotone_ok(s, a, r, rho, dims, bn, eps)
    record(9, bad == 0, f"40 profiles (20 equal-width, 20 mixed): {bad} failed assertions")


@pytest.mark.xfail(strict=True, reason="the printed closed form (rho, product, exponent 3/2) does not "
                   "match the assembled per-layer sum; reported alongside, never used")
def test_c09_printed_closed_form_literal():
    for s, a, r, rho, dims, bn, eps in _profiles(20, True, 9):
        cb = adversarial_cover_bound(s, a, r, rho, dims, bn, eps)
        assert abs(cb.assembled - cb.printed_closed_form) <= cb.ceiling_slack


def test_c10_gap_sanity(tmp_path):
    import json
    start = time.perf_counter()
    out = tmp_path / "train.json"
    code = main(["train", "--d", "2", "--hidden", "8", "--n-train", "200", "--n-test", "200",
                 "--epochs", "100", "--eps", "0.1", "--p", "inf", "--seed", "0", "--out", str(out)])
    elapsed = time.perf_counter() - start
    r = json.loads(out.read_text())["result"]
    record(10, code == 0 and r["gap_within_bound"] and elapsed < 300,
           f"robust gap {r['robust_gap']:.4f} <= main bound {r['main_bound']['value']:.4g} "
           f"(ratio {r['gap_over_bound']:.2e}), {elapsed:.1f}s")


def test_c11_negative_control(tmp_path):
    code = main(["lemma-check", "--network", str(FIX / "two_layer.json"), "--network2",
                 str(FIX / "two_layer.json"), "--data", str(FIX / "two_layer.csv"), "--resolution", "11",
                 "--robust-override", str(FIX / "corrupted_override.json"), "--out", str(tmp_path / "o.json")])
    record(11, code == 1, f"corrupted fixture exit code {code}")
