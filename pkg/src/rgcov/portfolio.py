"""Budget-constrained backtest of allocations built from a causal/noncausal split.

Each allocation row ``a`` (one row of ``A^{-1}``) defines a portfolio. At
date ``t`` the investor holds capital ``V_t`` and buys ``s_t a_j`` units of
asset ``j`` with ``s_t = V_t / sum_j |a_j| p_{j,t}``, so that the gross
exposure equals ``V_t``; negative entries are short sales. The position is
closed one period later for the log-return

    r_{t+1} = s_t sum_j a_j (ln p_{j,t+1} - ln p_{j,t})

and ``V_{t+1} = V_t + r_{t+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import make_lsq_spline

from .errors import DataError, DomainError, NumericalError
from .var import CausalNoncausalSplit

OBS_PER_KNOT = 24


@dataclass(frozen=True)
class Detrended:
    """``series = detrended * scale + trend`` column by column."""

    detrended: np.ndarray
    trend: np.ndarray
    scale: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.detrended * self.scale + self.trend


def _spline_trend(x: np.ndarray, y: np.ndarray, knots: int) -> np.ndarray:
    inner = np.linspace(x[0], x[-1], knots)[1:-1]
    t = np.concatenate([[x[0]] * 4, inner, [x[-1]] * 4])
    return make_lsq_spline(x, y, t, k=3)(x)


def detrend(series, knots: int | None = None) -> Detrended:
    """Remove a least-squares cubic spline trend and scale to unit standard deviation.

    ``knots`` counts the equally spaced knots including both end points
    (default: one per 24 observations, at least 2). The spline reproduces
    any cubic polynomial exactly.
    """
    y = np.asarray(series, dtype=float)
    one_d = y.ndim == 1
    if one_d:
        y = y[:, None]
    T = y.shape[0]
    if T < 4:
        raise DomainError(f"need at least 4 observations to fit a cubic spline, got {T}")
    if knots is None:
        knots = max(2, T // OBS_PER_KNOT)
    if knots < 2:
        raise DomainError("need at least 2 knots")
    if knots + 2 > T:
        raise DomainError(f"{knots} knots need more than {T} observations")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    x = np.arange(T, dtype=float)
    trend = np.column_stack([_spline_trend(x, y[:, i], knots) for i in range(y.shape[1])])
    resid = y - trend
    scale = resid.std(axis=0)
    peak = np.maximum(np.abs(y).max(axis=0), 1.0)
    if np.any(scale <= 1e-12 * peak):
        raise DomainError("detrended series has zero variance; cannot scale to unit standard deviation")
    out = Detrended(resid / scale, trend, scale)
    if one_d:
        return Detrended(out.detrended[:, 0], out.trend[:, 0], out.scale[0])
    return out


@dataclass(frozen=True)
class AllocationRow:
    coefficients: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        a = np.asarray(self.coefficients, dtype=float).ravel()
        if a.size == 0 or not np.any(a != 0) or not np.all(np.isfinite(a)):
            raise DomainError("allocation row must be finite and not all zero")
        object.__setattr__(self, "coefficients", a)

    def to_json(self) -> dict:
        return {"label": self.label, "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_json(cls, d) -> "AllocationRow":
        if isinstance(d, dict):
            return cls(d["coefficients"], d.get("label", "custom"))
        return cls(d)


def allocations_from_split(split: CausalNoncausalSplit) -> list[AllocationRow]:
    """Causal rows of ``A^{-1}`` first, then the noncausal rows."""
    rows = [AllocationRow(r, "causal") for r in split.A_up1]
    rows += [AllocationRow(r, "noncausal") for r in split.A_up2]
    return rows


@dataclass
class PortfolioPath:
    label: str
    scale: np.ndarray  # s_t, t = 1..T-1
    weights: np.ndarray  # (T-1, m)
    returns: np.ndarray  # r_t, t = 2..T
    values: np.ndarray  # V_t, t = 1..T
    cumulative: np.ndarray  # running sum of returns

    @property
    def initial_value(self) -> float:
        return float(self.values[0])


@dataclass
class BacktestResult:
    portfolios: list
    index: list | None = None

    def to_frame(self) -> pd.DataFrame:
        """Long table with one row per date and portfolio."""
        parts = []
        for k, path in enumerate(self.portfolios):
            n = path.returns.size
            dates = self.index[1 : n + 1] if self.index is not None else list(range(2, n + 2))
            parts.append(
                pd.DataFrame(
                    {
                        "date": dates,
                        "portfolio": f"{k}:{path.label}",
                        "return": path.returns,
                        "cumulative": path.cumulative,
                    }
                )
            )
        return pd.concat(parts, ignore_index=True)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _check_prices(prices) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[0] < 2:
        raise DomainError("need a (T, m) price panel with T >= 2")
    if not np.all(np.isfinite(p)):
        raise DataError("prices contain missing or non-finite values")
    if not np.all(p > 0):
        raise DataError("prices must be strictly positive")
    return p


def backtest(prices, rows: Sequence[AllocationRow], v1: float = 100.0, index=None) -> BacktestResult:
    """Run the budget-constrained strategy for every allocation row."""
    p = _check_prices(prices)
    if not v1 > 0:
        raise DomainError("initial capital must be positive")
    rows = [r if isinstance(r, AllocationRow) else AllocationRow(r) for r in rows]
    logp = np.log(p)
    dlog = np.diff(logp, axis=0)
    T = p.shape[0]
    out = []
    for row in rows:
        a = row.coefficients
        if a.size != p.shape[1]:
            raise DomainError(f"allocation has {a.size} entries for {p.shape[1]} assets")
        gross = p[:-1] @ np.abs(a)
        if np.any(gross == 0):
            raise NumericalError("degenerate allocation: zero gross exposure")
        V = np.empty(T)
        s = np.empty(T - 1)
        r = np.empty(T - 1)
        V[0] = v1
        for t in range(T - 1):
            s[t] = V[t] / gross[t]
            r[t] = s[t] * (dlog[t] @ a)
            V[t + 1] = V[t] + r[t]
        out.append(PortfolioPath(row.label, s, s[:, None] * a, r, V, np.cumsum(r)))
    return BacktestResult(out, None if index is None else list(index))


def benchmark(index_prices, v1: float = 100.0, index=None) -> PortfolioPath:
    """The same strategy holding the index alone."""
    p = np.asarray(index_prices, dtype=float).reshape(-1, 1)
    return backtest(p, [AllocationRow([1.0], "index")], v1, index).portfolios[0]
