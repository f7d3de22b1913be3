import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rgcov.dependence import TestResult, mixture_pvalue, mixture_weights, rgcov_spec_test, rnlsd, zeta_approx
from rgcov.errors import DomainError
from rgcov.estimator import EstimatorConfig, ShrinkageRegime, estimate, objective
from rgcov.transforms import TransformSpec
from rgcov.var import NoiseSpec, VarModel, simulate


def test_mixture_weights_identity_examples():
    w, mu = mixture_weights(np.eye(2), 0.0)
    np.testing.assert_array_equal(w, np.ones(4))
    np.testing.assert_array_equal(mu, np.ones(2))
    w, mu = mixture_weights(np.eye(2), 0.3)
    np.testing.assert_allclose(mu, [1.3, 1.3])
    # each weight is the product of two 1/mu factors
    np.testing.assert_allclose(w, np.full(4, 1 / 1.69))


def test_mixture_weights_are_pairwise_products(rng):
    a = rng.standard_normal((3, 3))
    g0 = a @ a.T + 0.5 * np.eye(3)
    w, mu = mixture_weights(g0, 0.7)
    assert w.size == 9
    np.testing.assert_allclose(np.sort(w), np.sort(np.outer(1 / mu, 1 / mu).ravel()))
    assert np.all((w > 0) & (w <= 1))
    with pytest.raises(DomainError):
        mixture_weights(-np.eye(2), 0.1)


def test_mixture_equal_weights_is_chisq():
    for s in (2.0, 8.0, 15.5):
        p, se = mixture_pvalue(s, np.ones(4), 2, draws=100_000, seed=1)
        assert abs(p - stats.chi2.sf(s, 8)) < 3 * max(se, 1e-4)
        assert se <= 0.5 / np.sqrt(100_000)


def test_mixture_single_weight_is_scaled_chisq():
    lam = 2.5
    for s in (0.5, 3.0, 9.0):
        p, se = mixture_pvalue(s, [lam], 1, draws=200_000, seed=2)
        assert abs(p - stats.chi2.sf(s / lam, 1)) < 3 * max(se, 1e-4)


def test_mixture_two_weights_brute_force():
    s = 6.0
    p, se = mixture_pvalue(s, [2.0, 1.0], 1, draws=100_000, seed=3)
    rng = np.random.default_rng(99)
    hits = 0
    n = 10_000_000
    for _ in range(10):
        z = rng.chisquare(1, size=(n // 10, 2)) @ [2.0, 1.0]
        hits += np.count_nonzero(z > s)
    pb = hits / n
    seb = np.sqrt(pb * (1 - pb) / n)
    assert abs(p - pb) < 3 * np.hypot(se, seb)


@settings(max_examples=15)
@given(st.floats(0, 30), st.floats(0, 30))
def test_mixture_pvalue_monotone(a, b):
    lo, hi = sorted((a, b))
    w = [1.5, 0.4, 0.4]
    assert mixture_pvalue(lo, w, 2, draws=10_000, seed=4)[0] >= mixture_pvalue(hi, w, 2, draws=10_000, seed=4)[0]


def test_mixture_validation():
    with pytest.raises(DomainError):
        mixture_pvalue(1.0, [1.0, 0.0], 1)
    with pytest.raises(DomainError):
        mixture_pvalue(1.0, [1.0], 1, draws=100)


def test_zeta_examples():
    nu = 40.0
    z, p = zeta_approx((2 * nu - 1) / 2, nu)
    assert z == pytest.approx(0.0, abs=1e-12) and p == pytest.approx(0.5)
    z, _ = zeta_approx(50.0, 50.0)
    assert z == pytest.approx(10 - np.sqrt(99), abs=1e-12)
    with pytest.warns(RuntimeWarning):
        zeta_approx(10.0, 20)


def test_rnlsd_statistic_is_scaled_objective(rng):
    y = rng.standard_normal((300, 2))
    spec = TransformSpec(["linear", "square"])
    r = rnlsd(y, spec, lags=2, delta=0.0)
    cfg = EstimatorConfig(lags=2, transforms=spec)
    assert r.statistic == 300 * objective(np.zeros(0), y, cfg, p=0)
    assert r.law == "chisq" and r.df == 32 and r.K == 4
    assert r.p_value == pytest.approx(stats.chi2.sf(r.statistic, 32))


def test_rnlsd_mixture_at_zero_delta_matches_chisq(rng):
    y = rng.standard_normal((400, 2))
    r = rnlsd(y, lags=2, delta=0.0)
    p, se = mixture_pvalue(r.statistic, r.weights, r.per_weight_df, draws=100_000, seed=5)
    assert abs(p - r.p_value) < 3 * max(se, 1e-4)


def test_rnlsd_with_shrinkage_uses_mixture(rng):
    y = rng.standard_normal((300, 2))
    r = rnlsd(y, lags=2, delta=0.3, draws=20_000)
    assert r.law == "mixture" and r.weights.size == 4 and 0 <= r.p_value <= 1
    assert 0 < r.p_value_se <= 0.5 / np.sqrt(20_000)
    d = r.to_json()
    assert len(d["weights"]) == 4 and "p_value_se" in d


def test_rnlsd_detects_dependence():
    y = simulate(VarModel((np.array([[0.5]]),), NoiseSpec("gaussian")), 500, seed=1)
    assert rnlsd(y, lags=2).p_value < 1e-6


def test_rnlsd_null_distribution_ks():
    stats_ = [rnlsd(np.random.default_rng(s).standard_normal((2000, 2)), lags=2).statistic for s in range(500)]
    assert stats.kstest(stats_, stats.chi2(8).cdf).pvalue > 0.01


def test_spec_test_dim_zero_equals_rnlsd(rng):
    y = rng.standard_normal((200, 2))
    cfg = EstimatorConfig(lags=2, transforms=TransformSpec(["linear", "square"]), regime=ShrinkageRegime.fixed(0.3))
    res = estimate(y, 0, cfg)
    a = rgcov_spec_test(res, draws=20_000, seed=3)
    b = rnlsd(y, cfg.transforms, lags=2, delta=0.3, draws=20_000, seed=3)
    assert a.to_json() == b.to_json()


def test_spec_test_chisq_law_and_statistic():
    y = simulate(VarModel((np.array([[0.5]]),), NoiseSpec("student_t", 5.0)), 600, seed=2)
    cfg = EstimatorConfig(lags=3, transforms=TransformSpec(["linear", "square"]), regime=ShrinkageRegime.over_t(10.0))
    res = estimate(y, 1, cfg, compute_covariance=False)
    t = rgcov_spec_test(res)
    assert t.law == "chisq" and t.df == 4 * 3 - 1
    assert t.statistic == pytest.approx((600 - 1) * objective(res.theta, y, cfg.with_regime(ShrinkageRegime.fixed(10.0 / 600))), rel=1e-10)


def test_spec_test_bootstrap_law():
    y = simulate(VarModel((np.array([[0.5]]),), NoiseSpec("student_t", 5.0)), 300, seed=3)
    cfg = EstimatorConfig(lags=2, transforms=TransformSpec(["linear", "square"]), regime=ShrinkageRegime.fixed(0.5))
    res = estimate(y, 1, cfg, compute_covariance=False)
    t = rgcov_spec_test(res, data=y, bootstrap=19, seed=1)
    assert t.law == "bootstrap" and t.bootstrap_statistics.size == 19
    assert 1 / 20 <= t.p_value <= 1
    with pytest.raises(DomainError):
        rgcov_spec_test(res)


def test_test_result_invariants():
    with pytest.raises(Exception):
        TestResult(statistic=-1.0, law="chisq", p_value=0.5, H=1, K=1, dim_theta=0, delta=0, nobs=10)
    r = TestResult(statistic=1.0, law="chisq", p_value=1.2, H=1, K=1, dim_theta=0, delta=0, nobs=10)
    assert r.p_value == 1.0
