import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcov.errors import ConfigurationError, DomainError, EstimationError, NearSingularError
from rgcov.estimator import (
    EstimatorConfig,
    Problem,
    ShrinkageRegime,
    asymptotic_covariance,
    efficient_avar,
    estimate,
    least_squares_var,
    objective,
    sandwich_matrices,
    select_delta_cv,
    starting_points,
)
from rgcov.linalg import autocovariances
from rgcov.montecarlo import mixed3_phi
from rgcov.transforms import TransformSpec
from rgcov.var import NoiseSpec, VarModel, classify, simulate

SMOOTH = TransformSpec(["linear", "square"])

pytestmark = pytest.mark.filterwarnings("ignore::rgcov.estimator.WeakIdentificationWarning")


def _cfg(delta=0.0, **kw):
    kw.setdefault("transforms", SMOOTH)
    return EstimatorConfig(regime=ShrinkageRegime.fixed(delta), **kw)


@pytest.fixture(scope="module")
def mixed_path():
    return simulate(VarModel((mixed3_phi(),), NoiseSpec("student_t", 4.0)), 400, seed=11)


@pytest.fixture(scope="module")
def ar1_path():
    return simulate(VarModel((np.array([[0.5]]),), NoiseSpec("student_t", 4.0)), 2000, seed=5)


@pytest.mark.parametrize("delta", [0.0, 0.2, 3.0])
def test_scalar_oracle(delta, rng):
    v = np.cumsum(rng.standard_normal(300)) * 0.1 + rng.standard_normal(300)
    c = v - v.mean()
    g0, g1 = c @ c / v.size, c[1:] @ c[:-1] / v.size
    r = g1 / g0
    cfg = _cfg(delta, transforms=TransformSpec(["linear"]), lags=1)
    got = Problem(v, 0, cfg).value(np.zeros(0))
    assert got == pytest.approx(r**2 * (g0 / (g0 + delta)) ** 2, rel=1e-12)


def test_iid_objective_is_order_k2h_over_t(rng):
    y = rng.standard_normal((5000, 2))
    cfg = _cfg(0.0)
    val = Problem(y, 0, cfg).value(np.zeros(0))
    K, H = 4, 2
    assert 0 <= val < 3 * K * K * H / 5000


def test_huge_delta_flattens_objective(mixed_path):
    cfg = _cfg(1e6)
    theta = least_squares_var(mixed_path, 1)
    assert objective(theta, mixed_path, cfg) < 1e-9
    assert objective(np.zeros(9), mixed_path, cfg) < 1e-9
    res = estimate(mixed_path, 1, replace(cfg, multistart=1, flip_starts=False), compute_covariance=False)
    assert res.objective_value >= 0


@pytest.mark.parametrize("T", [200, 500, 800])
@pytest.mark.parametrize("c", [0.1, 0.3, 0.5, 1.0, 2.5])
def test_regime_equivalence_is_bit_exact(c, T, rng):
    y = rng.standard_normal((T, 2))
    theta = 0.1 * rng.standard_normal(4)
    a = objective(theta, y, EstimatorConfig(transforms=SMOOTH, regime=ShrinkageRegime.fixed(c)))
    b = objective(theta, y, EstimatorConfig(transforms=SMOOTH, regime=ShrinkageRegime.over_t(c * T)))
    assert a == b


def test_objective_nonnegative_and_diagonal_variant(mixed_path, rng):
    for _ in range(20):
        theta = rng.standard_normal(9)
        for w in ("full", "diagonal"):
            assert objective(theta, mixed_path, _cfg(0.3, weighting=w)) >= -1e-12


def test_diagonal_weighting_matches_direct_formula(mixed_path, rng):
    theta = 0.3 * rng.standard_normal(9)
    cfg = _cfg(0.4, weighting="diagonal")
    pr = Problem(mixed_path, 1, cfg)
    g = pr.gammas(theta)
    W = np.diag(1.0 / (np.diag(g[0]) + 0.4))
    direct = sum(np.trace(g[h] @ W @ g[h].T @ W) for h in (1, 2))
    assert pr.value(theta) == pytest.approx(direct, rel=1e-12)


def test_full_weighting_matches_direct_formula(mixed_path, rng):
    theta = 0.3 * rng.standard_normal(9)
    pr = Problem(mixed_path, 1, _cfg(0.4))
    g = pr.gammas(theta)
    W = np.linalg.inv(g[0] + 0.4 * np.eye(6))
    direct = sum(np.trace(g[h] @ W @ g[h].T @ W) for h in (1, 2))
    assert pr.value(theta) == pytest.approx(direct, rel=1e-10)


def test_sherman_morrison_backend_agrees(rng):
    y = rng.standard_normal((300, 3))
    spec = TransformSpec(["linear", "square", "cube", "abs"] * 1)
    theta = 0.2 * rng.standard_normal(9)
    for delta in (0.05, 1.0):
        dense = objective(theta, y, EstimatorConfig(transforms=spec, regime=ShrinkageRegime.fixed(delta)))
        sm = objective(theta, y, EstimatorConfig(transforms=spec, regime=ShrinkageRegime.fixed(delta), backend="sherman_morrison"))
        assert sm == pytest.approx(dense, rel=1e-8)
    with pytest.raises(ConfigurationError):
        Problem(y, 1, EstimatorConfig(backend="sherman_morrison"))


def _value_scaled(problem, theta, c):
    v = c * problem.transformed(theta).values
    g = autocovariances(v, problem.config.lags)
    return problem._value_from(g, problem.weight(g))


def test_scale_invariance_only_without_shrinkage(mixed_path, rng):
    theta = 0.3 * rng.standard_normal(9)
    p0 = Problem(mixed_path, 1, _cfg(0.0))
    assert _value_scaled(p0, theta, 7.0) == pytest.approx(_value_scaled(p0, theta, 1.0), rel=1e-9)
    p1 = Problem(mixed_path, 1, _cfg(0.5))
    assert abs(_value_scaled(p1, theta, 7.0) / _value_scaled(p1, theta, 1.0) - 1) > 1e-3


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5]), st.sampled_from(["full", "diagonal"]))
def test_gradient_matches_finite_differences(seed, delta, weighting):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((150, 2))
    theta = 0.4 * rng.standard_normal(4)
    pr = Problem(y, 1, _cfg(delta, weighting=weighting, transforms=TransformSpec(["linear", "square", "cube"])))
    val, grad = pr.value_and_grad(theta)
    assert val == pytest.approx(pr.value(theta), rel=1e-12)
    num = pr.numeric_gradient(theta)
    np.testing.assert_allclose(grad, num, rtol=1e-4, atol=1e-4 * np.abs(num).max())


def test_gamma_jacobian_matches_finite_differences(mixed_path, rng):
    theta = 0.3 * rng.standard_normal(9)
    pr = Problem(mixed_path, 1, _cfg(0.0, transforms=TransformSpec(["linear", "square", "cube"])))
    a, n = pr.gamma_jacobian(theta), pr.numeric_gamma_jacobian(theta)
    scale = np.abs(n).max()
    np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-5 * scale)


def test_ar1_consistency(ar1_path):
    res = estimate(ar1_path, 1, _cfg(0.0))
    assert abs(res.theta[0] - 0.5) < 0.05
    assert res.converged
    assert res.objective_value >= 0
    cov = res.asymptotic_cov
    assert cov.shape == (1, 1) and cov[0, 0] > 0


def test_noncausal_ar1_is_found(ar1_path):
    y = simulate(VarModel((np.array([[1.6]]),), NoiseSpec("student_t", 4.0)), 1000, seed=8)
    res = estimate(y, 1, _cfg(0.0))
    assert abs(res.theta[0] - 1.6) < 0.15


def test_sandwich_reduces_to_efficient_at_zero_delta(mixed_path):
    theta = least_squares_var(mixed_path, 1)
    cfg = _cfg(0.0)
    sw = sandwich_matrices(theta, mixed_path, 1, cfg)
    eff = efficient_avar(theta, mixed_path, 1, cfg)
    np.testing.assert_allclose(sw.avar, eff, rtol=1e-8, atol=1e-8 * np.abs(eff).max())
    np.testing.assert_allclose(sw.I, 2 * sw.J, rtol=1e-10, atol=1e-10 * np.abs(sw.J).max())


def test_sandwich_is_symmetric_psd(mixed_path):
    theta = least_squares_var(mixed_path, 1)
    sw = sandwich_matrices(theta, mixed_path, 1, _cfg(0.7))
    np.testing.assert_array_equal(sw.avar, sw.avar.T)
    assert np.linalg.eigvalsh(sw.avar).min() > -1e-10


def test_near_singular_carries_diagnostic(rng):
    y = rng.standard_normal((100, 1))
    pr = Problem(y, 0, _cfg(0.0, transforms=TransformSpec(["linear", "linear"])))
    with pytest.raises(NearSingularError) as exc:
        pr.value(np.zeros(0))
    assert exc.value.min_eigenvalue < 1e-10
    with pytest.raises(EstimationError, match="delta"):
        estimate(rng.standard_normal((100, 1)), 1, _cfg(0.0, transforms=TransformSpec(["linear", "linear"])))
    assert Problem(y, 0, _cfg(0.1, transforms=TransformSpec(["linear", "linear"]))).value(np.zeros(0)) >= 0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EstimatorConfig(lags=0)
    with pytest.raises(ConfigurationError):
        ShrinkageRegime.fixed(-1)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(weighting="banded")
    cfg = EstimatorConfig(transforms=TransformSpec(["linear"]), lags=1)
    with pytest.raises(ConfigurationError):
        cfg.check_dimensions(3, 2)
    with pytest.raises(DomainError):
        Problem(np.zeros((3, 1)), 1, EstimatorConfig(lags=2))


def test_config_json_roundtrip():
    cfg = EstimatorConfig(lags=3, transforms=TransformSpec(["linear", "sign"]), regime=ShrinkageRegime.over_t(40.0), weighting="diagonal", multistart=3)
    again = EstimatorConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert again == cfg
    assert ShrinkageRegime.from_json({"eta": 2}) == ShrinkageRegime.over_t(2.0)
    assert ShrinkageRegime.from_json(0.5) == ShrinkageRegime.fixed(0.5)


def test_starting_points_schedule(mixed_path):
    starts = starting_points(mixed_path, 1, EstimatorConfig(multistart=5))
    labels = [s[0] for s in starts]
    assert labels[:5] == ["ls", "zero", "perturb0", "perturb1", "perturb2"]
    assert any(l.startswith("flip") for l in labels)
    assert len(starting_points(mixed_path, 1, EstimatorConfig(multistart=1, flip_starts=False))) == 1


def test_estimation_result_json(mixed_path):
    res = estimate(mixed_path, 1, _cfg(1.0, multistart=2))
    d = json.loads(json.dumps(res.to_json()))
    assert len(d["eigenvalue_moduli"]) == 3 and d["weight_dim"] == 6
    assert np.asarray(d["coefficients"]).shape == (1, 3, 3)
    np.testing.assert_allclose(res.residuals, Problem(mixed_path, 1, res.config).residuals(res.theta))
    c = classify(res.theta_hat)
    assert c.n1 + c.n2 == 3


def test_p_zero_fit(rng):
    y = rng.standard_normal((50, 2))
    res = estimate(y, 0, _cfg(0.0))
    assert res.dim_theta == 0
    np.testing.assert_array_equal(res.residuals, y)


def test_select_delta_cv(mixed_path):
    best, scores = select_delta_cv(mixed_path, 1, _cfg(0.0, multistart=1, flip_starts=False), [1.0, 0.1])
    assert best in (0.1, 1.0) and set(scores) == {0.1, 1.0}
    assert scores[best] == min(scores.values())


def test_covariance_note_for_rough_transforms(ar1_path):
    smooth = estimate(ar1_path, 1, _cfg(0.0, multistart=1))
    assert smooth.covariance_note is None
    rough = estimate(ar1_path, 1, _cfg(0.0, multistart=1, transforms=TransformSpec(["linear", "sign"])))
    assert "sign" in rough.covariance_note and "sign" in rough.to_json()["covariance_note"]
