import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcov.errors import DataError, DomainError
from rgcov.portfolio import AllocationRow, _spline_trend, allocations_from_split, backtest, benchmark, detrend
from rgcov.var import decompose


def _panel(rng, T=60, m=4):
    return 20 * np.exp(np.cumsum(0.05 * rng.standard_normal((T, m)), axis=0))


def test_single_asset_hand_example():
    res = backtest([10.0, 11.0], [AllocationRow([1.0])], v1=100.0)
    path = res.portfolios[0]
    assert path.scale[0] == pytest.approx(10.0, abs=1e-12)
    assert path.returns[0] == pytest.approx(10 * np.log(1.1), abs=1e-12)
    assert path.values[1] == pytest.approx(100 + 10 * np.log(1.1), abs=1e-12)
    flat = backtest(np.full(10, 7.0), [[1.0]]).portfolios[0]
    np.testing.assert_array_equal(flat.returns, 0.0)
    np.testing.assert_array_equal(flat.values, 100.0)


@settings(max_examples=50)
@given(st.integers(0, 10**6))
def test_budget_identity_and_scaling(seed):
    rng = np.random.default_rng(seed)
    p = _panel(rng)
    a = rng.standard_normal(4)
    c = rng.uniform(0.1, 10)
    base = backtest(p, [AllocationRow(a)], v1=100.0).portfolios[0]
    gross = (np.abs(base.weights) * p[:-1]).sum(axis=1)
    np.testing.assert_allclose(gross, base.values[:-1], rtol=1e-9)
    scaled = backtest(p, [AllocationRow(c * a)], v1=100.0).portfolios[0]
    np.testing.assert_allclose(scaled.returns, base.returns, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(scaled.scale * c, base.scale, rtol=1e-10)
    np.testing.assert_array_equal(base.cumulative, np.cumsum(base.returns))
    np.testing.assert_allclose(base.values, 100.0 + np.concatenate([[0.0], base.cumulative]), rtol=1e-12)


def test_initial_capital_linearity(rng):
    p = _panel(rng)
    a = rng.standard_normal(4)
    one = backtest(p, [a], v1=100.0).portfolios[0]
    two = backtest(p, [a], v1=200.0).portfolios[0]
    np.testing.assert_allclose(two.returns, 2 * one.returns, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(two.values - 200.0, 2 * (one.values - 100.0), rtol=1e-10, atol=1e-10)


def test_benchmark_equals_single_asset_backtest(rng):
    idx = _panel(rng, m=1)[:, 0]
    b = benchmark(idx, 50.0)
    direct = backtest(idx[:, None], [AllocationRow([1.0])], 50.0).portfolios[0]
    np.testing.assert_array_equal(b.returns, direct.returns)


def test_allocations_from_split(rng):
    rows = allocations_from_split(decompose(np.diag([0.5, 2.0])))
    assert [r.label for r in rows] == ["causal", "noncausal"]
    np.testing.assert_allclose(np.vstack([r.coefficients for r in rows]), np.eye(2))
    a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    phi = a @ np.diag([0.3, -0.6, 1.8]) @ np.linalg.inv(a)
    s = decompose(phi)
    rows = allocations_from_split(s)
    assert len(rows) == 3
    np.testing.assert_allclose(np.vstack([r.coefficients for r in rows]), np.linalg.inv(s.A), atol=1e-10)


def test_backtest_errors(rng):
    with pytest.raises(DataError):
        backtest([1.0, -1.0], [[1.0]])
    with pytest.raises(DataError):
        backtest([1.0, np.nan], [[1.0]])
    with pytest.raises(DomainError):
        AllocationRow([0.0, 0.0])
    with pytest.raises(DomainError):
        backtest(_panel(rng), [[1.0, 2.0]])
    with pytest.raises(DomainError):
        backtest([1.0, 2.0], [[1.0]], v1=0)


def test_frame_layout(rng):
    p = _panel(rng, T=5, m=2)
    res = backtest(p, [[1.0, -1.0], [0.5, 0.5]], index=[f"d{k}" for k in range(5)])
    f = res.to_frame()
    assert list(f.columns) == ["date", "portfolio", "return", "cumulative"]
    assert len(f) == 8 and f["date"].iloc[0] == "d1"


def test_detrend_reproduces_cubic():
    x = np.arange(200.0)
    y = 1 + 0.3 * x - 0.002 * x**2 + 1e-5 * x**3
    trend = _spline_trend(x, y, 6)
    assert np.max(np.abs(y - trend)) < 1e-6 * np.max(np.abs(y))
    # nothing is left to scale once the cubic is removed
    with pytest.raises(DomainError, match="zero variance"):
        detrend(y, knots=6)
    noisy = detrend(y + 1e-3 * np.sin(x * 1.7), knots=6)
    np.testing.assert_allclose(noisy.trend, y, atol=5e-3)


def test_detrend_scaling_and_reconstruction(rng):
    t = np.arange(300.0)
    y = np.column_stack([np.sin(t / 40) * 5 + rng.standard_normal(300), 0.01 * t + rng.standard_normal(300)])
    d = detrend(y)
    np.testing.assert_allclose(d.detrended.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(d.reconstruct(), y, atol=1e-9)


def test_detrend_errors():
    with pytest.raises(DomainError):
        detrend(np.full(50, 3.0))
    with pytest.raises(DomainError):
        detrend([1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        detrend(np.arange(20.0), knots=1)
