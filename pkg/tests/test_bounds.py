import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustcover.bounds import (NormProfile, adaptive_simpson, awasthi_two_layer_bound, b_tilde,
                                bound_report, confidence_term, constant_free_bound, cover_function,
                                dudley_closed_form_quadratic, dudley_value, linear_sandwich, main_bound,
                                mustafa_bound, xiao_bound)
from robustcover.covers import adversarial_cover_bound
from robustcover.linalg import INF, group_norm_2_1, spectral_norm
from robustcover.network import random_network, ramp_margin
from oracles import trapezoid_dudley


def profile(s, a=None, dims=None, rho=2.0, n21=None, n1inf=None, fro=None, rho_act=None):
    L = len(s)
    a = a or list(s)
    return NormProfile(tuple(s), tuple(a), tuple(n21 or a), tuple(n1inf or a), tuple(fro or s),
                       tuple(rho_act or [1.0] * L), rho, tuple(dims or [2] * (L + 1)))


def test_b_tilde_formula():
    assert b_tilde(1.0, 0.1, 2, 7) == pytest.approx(1.1)
    assert b_tilde(1.0, 0.1, INF, 4) == pytest.approx(1.2)
    assert b_tilde(2.5, 0.0, INF, 9) == 2.5
    with pytest.raises(ValueError):
        b_tilde(-1, 0.1, 2, 2)


@given(st.floats(0, 5), st.floats(0, 2), st.floats(0, 2), st.integers(1, 50))
def test_b_tilde_monotone(B, e1, e2, d):
    lo, hi = sorted([e1, e2])
    assert b_tilde(B, lo, INF, d) <= b_tilde(B, hi, INF, d)
    assert b_tilde(B, hi, INF, d) <= b_tilde(B + 1, hi, INF, d)
    assert b_tilde(B, hi, 4, d) <= b_tilde(B, hi, 4, d + 1)


def test_adaptive_simpson_known_integrals():
    assert adaptive_simpson(math.sin, 0, math.pi) == pytest.approx(2.0, rel=1e-10)
    assert adaptive_simpson(lambda x: 1 / x, 1, math.e) == pytest.approx(1.0, rel=1e-10)
    assert adaptive_simpson(math.exp, 1, 1) == 0.0


def test_dudley_zero_cover():
    res = dudley_value(lambda e: 0.0, 100)
    assert res.value == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("R,n", [(0.1, 64), (1.0, 1024), (10.0, 64)])
def test_dudley_quadratic_against_oracles(R, n):
    res = dudley_value(lambda e: R / e ** 2, n)
    closed = dudley_closed_form_quadratic(R, n)
    assert res.value == pytest.approx(closed, rel=1e-6)
    assert res.alpha == pytest.approx(3 * math.sqrt(R) / math.sqrt(n), rel=1e-3)
    # brute-force trapezoid minimum over a fine alpha set around the optimum
    alphas = 3 * math.sqrt(R / n) * np.linspace(0.9, 1.1, 21)
    assert trapezoid_dudley(lambda e: R / e ** 2, n, alphas) == pytest.approx(closed, rel=1e-6)


def test_dudley_minimum_below_every_grid_value():
    ln_cover = lambda e: 3.0 / e ** 2 + 5.0
    n = 256
    grid = np.geomspace(1e-3, 16, 40)
    res = dudley_value(ln_cover, n, grid)
    for a in grid:
        integral = adaptive_simpson(lambda e: math.sqrt(ln_cover(e)), a, 16)
        assert res.value <= 4 * a / 16 + 12 / n * integral + 1e-12


def test_cover_function_majorant_dominates_assembled():
    prof = profile([1.5, 2.0], [3.0, 4.0], dims=[2, 5, 3])
    maj = cover_function(prof, 1.2, 50)
    ass = cover_function(prof, 1.2, 50, kind="assembled")
    for e in np.geomspace(0.01, 7, 60):
        assert ass(e) <= maj(e) * (1 + 1e-12)
        assert maj(e) - ass(e) <= math.log(2 * 5 * 2) + math.log(2 * 3 * 5) + 1e-9


def test_main_bound_homogeneity_and_confidence():
    prof = profile([1.5, 2.0], [3.0, 4.0], dims=[2, 5, 3])
    c = 1.7
    scaled = prof.scaled([c, c])
    cb1 = adversarial_cover_bound(prof.s, prof.a, prof.rho_act, prof.rho, prof.dims, 3.0, 0.5)
    cb2 = adversarial_cover_bound(scaled.s, scaled.a, scaled.rho_act, scaled.rho, scaled.dims, 3.0, 0.5)
    assert cb2.unceiled == pytest.approx(c ** 4 * cb1.unceiled, rel=1e-12)
    cf1 = constant_free_bound(prof, 1.0, 100, 0.05) - math.sqrt(math.log(20) / 100)
    cf2 = constant_free_bound(scaled, 1.0, 100, 0.05) - math.sqrt(math.log(20) / 100)
    assert cf2 == pytest.approx(c ** 2 * cf1, rel=1e-12)
    assert confidence_term(400, 0.05) == pytest.approx(confidence_term(100, 0.05) / 2)


def test_main_bound_monotone_in_b_tilde_and_s():
    prof = profile([0.3, 0.4], [0.5, 0.6], dims=[2, 4, 2], rho=1.0)
    n = 10_000
    vals = [main_bound(prof, bt, n, 0.05).value for bt in np.linspace(0.1, 3, 12)]
    assert all(x <= y * (1 + 1e-9) for x, y in zip(vals, vals[1:]))
    vals = [main_bound(prof.scaled([c, 1.0]), 1.0, n, 0.05).value for c in np.linspace(0.5, 3, 12)]
    assert all(x <= y * (1 + 1e-9) for x, y in zip(vals, vals[1:]))


def test_main_bound_rejects_bad_delta():
    with pytest.raises(ValueError):
        main_bound(profile([1.0]), 1.0, 10, 1.0)


def test_xiao_bound():
    p1 = profile([1.0], dims=[1, 1])
    assert xiao_bound(p1, 2.0, 4) == pytest.approx(2.0 * 1 * 1 / 2)
    p2 = profile([1.0, 2.0], dims=[3, 4, 2])
    p3 = profile([1.0, 2.0], dims=[3, 8, 2])
    assert xiao_bound(p3, 1.0, 9) == pytest.approx(2 * xiao_bound(p2, 1.0, 9))
    prof = profile([1.3, 0.7, 2.1], dims=[2, 6, 5, 3])
    L = 3
    expected = 1.4 * 6 * math.sqrt(L * math.log(L)) * 1.3 * 0.7 * 2.1 / math.sqrt(50)
    assert xiao_bound(prof, 1.4, 50) == pytest.approx(expected, rel=1e-12)


def test_mustafa_single_layer_term1():
    W = np.random.default_rng(0).standard_normal((3, 4))
    net = random_network([4, 3], 0)
    net = net.with_weights([W])
    prof = NormProfile.from_network(net, ramp_margin(1.0))
    t = mustafa_bound(prof, 1.5, 25, 1.0, 0.1)
    assert t.term1 == pytest.approx(1.5 * group_norm_2_1(W) / 5, rel=1e-12)
    assert t.product == pytest.approx(t.term1 * t.term2)


def test_mustafa_term2_grows_with_input_dimension():
    vals = []
    for d in (1, 2, 4, 8, 16, 32):
        prof = profile([1.0, 1.0], dims=[d, 4, 2])
        vals.append(mustafa_bound(prof, 1.0, 100, 1.0, 0.5).term2)
    assert all(x < y for x, y in zip(vals, vals[1:]))
    # grows at least like sqrt(d) once the d-th power term dominates
    assert vals[-1] / vals[-3] >= math.sqrt(32 / 8) * 0.9


def test_mustafa_random_profile_reevaluation():
    prof = profile([1.2, 0.8], a=[2.0, 1.5], dims=[3, 5, 2], n21=[1.6, 1.1], n1inf=[1.4, 0.9],
                   fro=[1.5, 1.0])
    bt, n, gamma, eps = 1.3, 64, 0.5, 0.1
    t = mustafa_bound(prof, bt, n, gamma, eps, C1=2.0, C2=0.5)
    term1 = bt * 2 * 1.2 * 0.8 * math.sqrt((1.6 / 1.2) ** 2 + (1.1 / 0.8) ** 2) / 8
    Gamma = max(1.2 * 0.8 * 1.5 * 5 / 1.2, 1.2 * 0.8 * 1.0 * 2 / 0.8)
    lam = 2 / gamma * 0.8 * 1.4 * math.sqrt(5)
    inner = (2.0 * bt * Gamma * n / gamma + 0.5 * 5) * n * (6 * eps * lam * n / gamma) ** 3 + 1
    assert t.term1 == pytest.approx(term1, rel=1e-12)
    assert t.Gamma == pytest.approx(Gamma) and t.lam == pytest.approx(lam)
    assert t.term2 == pytest.approx(math.sqrt(math.log(inner)) * math.log(n), rel=1e-12)


def test_awasthi():
    p = profile([1.0, 1.0], dims=[1, 1, 2])
    assert awasthi_two_layer_bound(p, 1.0, 1) == pytest.approx(1 + math.sqrt(2))
    p2 = profile([2.0, 1.5], dims=[3, 4, 2])
    p3 = p2.scaled([3.0, 1.0])
    assert awasthi_two_layer_bound(p3, 1.0, 9) == pytest.approx(3 * awasthi_two_layer_bound(p2, 1.0, 9))
    assert awasthi_two_layer_bound(p2, 1.2, 9) == pytest.approx(1.2 * 2 * 1.5 * (1 + math.sqrt(15)) / 3)
    with pytest.raises(ValueError):
        awasthi_two_layer_bound(profile([1.0]), 1.0, 4)


def test_linear_sandwich():
    assert linear_sandwich(1.0, 0.0, INF, 2, 5, 10, 0.3) == (0.3, 0.3)
    lo, hi = linear_sandwich(2.0, 0.5, INF, 1, 9, 16, 0.0)
    assert hi == pytest.approx(0.5 * 2.0 * 1 / (2 * 4))   # exponent 1 - 0 - 1 = 0
    lo, hi = linear_sandwich(1.0, 0.5, 2, 2, 4, 16, 0.1)
    assert hi == pytest.approx(0.1 + 0.5 / 8)              # d^0 = 1
    lo, hi = linear_sandwich(1.0, 0.5, INF, 2, 16, 16, 0.0)
    assert hi == pytest.approx(0.5 * 4 / 8)                # d^(1/2) = 4


@given(st.floats(0, 3), st.floats(0.1, 3), st.sampled_from([2.0, INF]), st.sampled_from([1.0, 2.0, INF]),
       st.integers(1, 20), st.integers(1, 500), st.floats(0, 2))
@settings(max_examples=200)
def test_linear_sandwich_ordered(eps, W, p, r, d, n, std):
    lo, hi = linear_sandwich(W, eps, p, r, d, n, std)
    assert lo <= hi + 1e-15


def test_bound_report_finite_and_nonnegative():
    net = random_network([2, 6, 3], 4)
    X = np.random.default_rng(0).uniform(-1, 1, (40, 2))
    rep = bound_report(net, X, ramp_margin(0.5), INF, 0.1, 0.05)
    d = rep.to_dict()
    for key in ("B", "B_tilde", "xiao_bound", "confidence_term", "awasthi_two_layer"):
        assert math.isfinite(d[key]) and d[key] >= 0
    assert d["main_bound"]["value"] >= 0
    assert all(layer["norm_chain_ok"] for layer in d["layers"])
    assert d["rho"] == 4.0 and d["rho_margin_form"] == 2.0
    assert rep.profile.s[0] == pytest.approx(spectral_norm(net.weights[0]))


def test_bound_report_single_layer_has_sandwich():
    net = random_network([2, 2], 1)
    X = np.random.default_rng(1).uniform(-1, 1, (30, 2))
    d = bound_report(net, X, ramp_margin(1.0), 2, 0.2, 0.1, linear_trials=50).to_dict()
    lo, hi = d["linear_sandwich"]["lower"], d["linear_sandwich"]["upper"]
    assert 0 <= lo <= hi
    assert d["main_bound"]["value"] / hi > 1


def test_bound_report_rejects_bad_delta():
    with pytest.raises(ValueError):
        bound_report(random_network([2, 2], 0), np.zeros((3, 2)), ramp_margin(1.0), 2, 0.1, 0.0)
