
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from perfsim.stats import (GofReport, binomial_mean_test, chi2_sf, chi_squared_gof, counts_of, gamma_q,
                           majority_pass, mean_within, tv_distance)


@pytest.mark.parametrize("x,k", [(0.1, 4), (3.3, 4), (9.0, 9), (400.0, 4), (1e-3, 1), (50.0, 30), (2.0, 200)])
def test_chi2_sf_vs_scipy(x, k):
    ref = sps.chi2.sf(x, k)
    assert abs(chi2_sf(x, k) - ref) <= 1e-8
    if ref > 1e-250:
        assert chi2_sf(x, k) == pytest.approx(ref, rel=1e-9)


@settings(max_examples=200)
@given(st.floats(0.05, 500), st.floats(0.0, 2000))
def test_gamma_q_vs_scipy(a, x):
    from scipy.special import gammaincc
    assert abs(gamma_q(a, x) - gammaincc(a, x)) <= 1e-8


def test_gamma_q_domain():
    with pytest.raises(ValueError):
        gamma_q(0, 1)
    with pytest.raises(ValueError):
        gamma_q(1, -1)
    assert gamma_q(2.5, 0) == 1.0


def test_gof_examples():
    r = chi_squared_gof([20, 20, 20, 20, 20], np.full(5, 0.2))
    assert r.statistic == 0 and r.p_value == pytest.approx(1.0) and r.passed
    r = chi_squared_gof([21, 19, 20, 20, 20], np.full(5, 0.2))
    assert r.statistic == pytest.approx(0.1)
    assert r.dof == 4
    assert r.p_value == pytest.approx(sps.chi2.sf(0.1, 4), abs=1e-10)
    assert r.p_value == pytest.approx(0.999, abs=5e-4)
    r = chi_squared_gof([100, 0, 0, 0, 0], np.full(5, 0.2))
    assert r.p_value < 1e-30 and not r.passed


def test_gof_mappings_and_impossible_outcomes():
    r = chi_squared_gof({"a": 50, "b": 50}, {"a": 0.5, "b": 0.5, "c": 0.0})
    assert r.passed and r.dof == 1
    r = chi_squared_gof({"a": 50, "b": 49, "c": 1}, {"a": 0.5, "b": 0.5, "c": 0.0})
    assert not r.passed and r.p_value == 0.0
    r = chi_squared_gof({"a": 50, "z": 3}, {"a": 0.5, "b": 0.5})
    assert not r.passed


def test_gof_merges_small_cells():
    probs = np.array([0.5, 0.49, 0.004, 0.003, 0.003])
    r = chi_squared_gof([500, 490, 4, 3, 3], probs)
    assert r.dof == 2 and r.passed


def test_gof_errors():
    with pytest.raises(ValueError):
        chi_squared_gof([0, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        chi_squared_gof([1, 2], [0.5, 0.6])
    with pytest.raises(ValueError):
        chi_squared_gof([1, 2, 3], [0.5, 0.5])
    with pytest.raises(ValueError):
        chi_squared_gof([-1, 2], [0.5, 0.5])


def test_gof_report_json_shape():
    d = chi_squared_gof([10, 10], [0.5, 0.5], seed=3).to_dict()
    assert set(d) == {"test", "statistic", "dof", "p_value", "pass", "seed"}
    assert d["seed"] == 3 and d["pass"] is True


def test_gof_calibration():
    gen = np.random.default_rng(123)
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    passes = sum(chi_squared_gof(gen.multinomial(10_000, probs), probs).passed for _ in range(1000))
    assert passes >= 995


def test_binomial_mean_examples():
    t = binomial_mean_test(300, 1000, 0.3)
    assert t.passed and t.margin == 0
    assert binomial_mean_test(0, 50, 0.0).passed
    assert not binomial_mean_test(1, 50, 0.0).passed
    assert binomial_mean_test(50, 50, 1.0).passed
    t = binomial_mean_test(503_000, 10**6, 0.5)
    assert not t.passed and t.margin / t.sigma == pytest.approx(6.0)
    for bad in [(1, 0, 0.5), (5, 4, 0.5), (1, 4, 1.5)]:
        with pytest.raises(ValueError):
            binomial_mean_test(*bad)
    with pytest.raises(ValueError):
        binomial_mean_test(1, 4, 0.5, z=0)


def test_mean_within():
    assert mean_within([1.0, 2.0, 3.0], 2.0).passed
    assert not mean_within(np.arange(100.0), 80.0).passed


def test_tv_examples():
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert tv_distance([1, 0], [0, 1]) == 1
    assert tv_distance([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])


def test_tv_metric_properties():
    gen = np.random.default_rng(5)
    for _ in range(500):
        p, q, r = gen.dirichlet(np.ones(6), size=3)
        assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
        assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
        assert 0 <= tv_distance(p, q) <= 1


def test_counts_and_majority():
    np.testing.assert_array_equal(counts_of([1, 1, 3], [1, 2, 3]), [2, 0, 1])
    ok, bad = GofReport(0, 1, 0.5, True), GofReport(9, 1, 1e-5, False)
    assert majority_pass([ok, ok, bad]) and not majority_pass([ok, bad, bad])
