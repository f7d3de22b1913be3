"""Portmanteau-type tests built on the (regularised) GCov statistic.

``T * sum_h Tr R^2(h, delta)`` is tested either on raw data (the RNLSD test
for absence of linear and nonlinear serial dependence) or on the residuals
of a fitted VAR (the specification test). Its null law is a chi-square when
``delta = 0`` or ``delta_T -> 0``, and a positive combination of independent
chi-squares for a fixed ``delta > 0``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError, NumericalError
from .estimator import EstimationResult, EstimatorConfig, Problem, ShrinkageRegime, estimate
from .linalg import as_series, autocovariances
from .transforms import TransformSpec
from .var import NoiseSpec, VarModel, simulate

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 100_000
DEFAULT_BOOTSTRAP = 199
_CHUNK = 20_000


@dataclass
class TestResult:
    """Outcome of one test.

    ``law`` is ``"chisq"``, ``"mixture"``, ``"bootstrap"`` or ``"normal"``.
    For a mixture, ``weights`` holds every ``lambda_l`` and each weights an
    independent chi-square with ``per_weight_df`` degrees of freedom.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    law: str
    p_value: float
    H: int
    K: int
    dim_theta: int
    delta: float
    nobs: int
    df: int | None = None
    weights: np.ndarray | None = None
    per_weight_df: int | None = None
    p_value_se: float = 0.0
    mu: np.ndarray | None = None
    bootstrap_statistics: np.ndarray | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.statistic >= 0:
            raise NumericalError(f"test statistic must be non-negative, got {self.statistic}")
        self.p_value = float(min(1.0, max(0.0, self.p_value)))

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level

    def to_json(self) -> dict:
        out = {
            "statistic": self.statistic,
            "law": self.law,
            "p_value": self.p_value,
            "p_value_se": self.p_value_se,
            "H": self.H,
            "K": self.K,
            "dim_theta": self.dim_theta,
            "delta": self.delta,
            "nobs": self.nobs,
            "df": self.df,
        }
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
            out["per_weight_df"] = self.per_weight_df
        if self.mu is not None:
            out["mu"] = self.mu.tolist()
        if self.bootstrap_statistics is not None:
            out["bootstrap_statistics"] = self.bootstrap_statistics.tolist()
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def mixture_weights(gamma0, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the fixed-``delta`` null law of the RNLSD statistic.

    With ``g_j`` the eigenvalues of ``gamma0``, returns
    ``lambda_{jk} = g_j g_k / ((g_j + delta)(g_k + delta))`` for all ordered
    pairs (``K^2`` values) together with ``mu_j = 1 + delta / g_j``, the
    eigenvalues of ``Gamma0^{-1/2} (Gamma0 + delta I) Gamma0^{-1/2}``. The
    weights are the pairwise products of the ``1 / mu_j``: the statistic
    normalises by ``(Gamma0 + delta I)^{-1}`` while the autocovariances
    fluctuate with ``Gamma0``, so each coordinate is shrunk, never inflated.
    """
    g0 = np.asarray(gamma0, dtype=float)
    gam = np.linalg.eigvalsh(0.5 * (g0 + g0.T))[::-1]
    if not gam[-1] > 0:
        raise DomainError("lag-0 autocovariance must be positive definite for mixture weights")
    if delta < 0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    shrink = gam / (gam + delta)
    return np.outer(shrink, shrink).ravel(), 1.0 + delta / gam


def mixture_pvalue(
    statistic: float,
    weights,
    per_weight_df: int,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo tail probability ``P(sum_l lambda_l chi2_l(df) > statistic)``.

    Returns ``(p, se)`` with ``se = sqrt(p (1 - p) / draws) <= 0.5 / sqrt(draws)``.
    Equal weights are pooled into one chi-square with the summed degrees of
    freedom, which leaves the law unchanged and halves the work for the
    symmetric weight sets produced by :func:`mixture_weights`. For a fixed
    seed the draws are common to every statistic, so ``p`` is monotone in it.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError("mixture weights must be finite and positive")
    if per_weight_df < 1:
        raise DomainError("per-weight degrees of freedom must be >= 1")
    if draws < 10_000:
        raise DomainError(f"need at least 10^4 draws, got {draws}")
    uniq, counts = np.unique(w, return_counts=True)
    dfs = counts * per_weight_df
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < draws:
        m = min(_CHUNK, draws - done)
        total = rng.chisquare(dfs, size=(m, uniq.size)) @ uniq
        exceed += int(np.count_nonzero(total > statistic))
        done += m
    p = exceed / draws
    return p, float(np.sqrt(p * (1.0 - p) / draws))


def zeta_approx(statistic: float, nu: float) -> tuple[float, float]:
    """Normal approximation ``z = sqrt(2 stat) - sqrt(2 nu - 1)`` with its upper-tail p-value."""
    if statistic < 0:
        raise DomainError("statistic must be >= 0")
    if nu < 1:
        raise DomainError("degrees of freedom must be >= 1")
    if nu <= 30:
        warnings.warn(
            f"normal approximation is meant for more than 30 degrees of freedom (got {nu})",
            RuntimeWarning,
            stacklevel=2,
        )
    z = float(np.sqrt(2.0 * statistic) - np.sqrt(2.0 * nu - 1.0))
    return z, float(stats.norm.sf(z))


def _config_for(transforms, lags: int, delta: float, weighting: str = "full") -> EstimatorConfig:
    if transforms is None:
        transforms = ["linear"]
    return EstimatorConfig(
        lags=lags,
        transforms=transforms if isinstance(transforms, TransformSpec) else TransformSpec(transforms),
        regime=ShrinkageRegime.fixed(delta),
        weighting=weighting,
    )


def _statistic(problem: Problem, theta) -> tuple[float, np.ndarray]:
    tv = problem.transformed(theta)
    g = autocovariances(tv.values, problem.config.lags)
    return problem.nobs * problem.value_from_gammas(g, tv.values), g


def rnlsd(
    data,
    transforms=None,
    lags: int = 2,
    delta: float = 0.0,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> TestResult:
    """Regularised test for absence of linear and nonlinear serial dependence.

    ``transforms=None`` treats ``data`` as an already transformed series.
    At ``delta = 0`` the null law is ``chi2(K^2 H)``; for ``delta > 0`` it is
    the mixture of :func:`mixture_weights`, evaluated by :func:`mixture_pvalue`.
    """
    y = as_series(data)
    if y.shape[0] <= lags:
        raise DomainError(f"need T > H, got T={y.shape[0]}, H={lags}")
    cfg = _config_for(transforms, lags, delta)
    problem = Problem(y, 0, cfg)
    stat, g = _statistic(problem, np.zeros(0))
    K = g.shape[1]
    if delta == 0:
        df = K * K * lags
        return TestResult(
            statistic=stat,
            law="chisq",
            p_value=float(stats.chi2.sf(stat, df)),
            H=lags,
            K=K,
            dim_theta=0,
            delta=0.0,
            nobs=problem.nobs,
            df=df,
            weights=np.ones(K * K),
            per_weight_df=lags,
            mu=np.ones(K),
        )
    weights, mu = mixture_weights(g[0], delta)
    p, se = mixture_pvalue(stat, weights, lags, draws=draws, seed=seed)
    return TestResult(
        statistic=stat,
        law="mixture",
        p_value=p,
        p_value_se=se,
        H=lags,
        K=K,
        dim_theta=0,
        delta=float(delta),
        nobs=problem.nobs,
        weights=weights,
        per_weight_df=lags,
        mu=mu,
    )


def rgcov_spec_test(
    result: EstimationResult,
    data=None,
    lags: int | None = None,
    delta: float | None = None,
    bootstrap: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    draws: int = DEFAULT_DRAWS,
) -> TestResult:
    """Specification test ``T * objective`` at the estimate.

    ``lags`` and ``delta`` default to those of the estimation. When the
    estimation used ``delta_T = eta / T`` or ``delta = 0``, the law is
    ``chi2(K^2 H - dim theta)``. For a fixed ``delta > 0`` the weights of the
    limiting mixture are not available in closed form once parameters are
    estimated; the p-value then comes from a residual bootstrap that needs
    ``data`` (the original series) and ``bootstrap`` replications.
    With no parameters this is exactly :func:`rnlsd` on the residuals.
    """
    cfg = result.config
    H = cfg.lags if lags is None else int(lags)
    if delta is None:
        d = result.delta
        regime_vanishes = cfg.regime.mode == "over_t" or d == 0
    else:
        d = float(delta)
        regime_vanishes = d == 0
    if result.dim_theta == 0:
        return rnlsd(result.residuals, cfg.transforms, lags=H, delta=d, draws=draws, seed=seed)
    if not result.converged:
        logger.warning("testing at a point where the optimizer did not report convergence")
    test_cfg = replace(cfg, lags=H, regime=ShrinkageRegime.fixed(d))
    problem = Problem(result.residuals, 0, test_cfg)
    stat, g = _statistic(problem, np.zeros(0))
    K = g.shape[1]
    df = K * K * H - result.dim_theta
    if df <= 0:
        raise ConfigurationError(f"K^2 H - dim theta = {df} must be positive")
    common = dict(statistic=stat, H=H, K=K, dim_theta=result.dim_theta, delta=d, nobs=problem.nobs)
    if regime_vanishes:
        return TestResult(law="chisq", p_value=float(stats.chi2.sf(stat, df)), df=df, **common)
    if data is None:
        raise DomainError("a fixed delta > 0 needs the original data for the bootstrap law")
    boot = _bootstrap_statistics(result, as_series(data), test_cfg, bootstrap, seed)
    p = (1.0 + np.count_nonzero(boot >= stat)) / (boot.size + 1.0)
    return TestResult(
        law="bootstrap",
        p_value=float(p),
        p_value_se=float(np.sqrt(p * (1 - p) / (boot.size + 1.0))),
        df=df,
        bootstrap_statistics=boot,
        notes=[f"{boot.size} residual-bootstrap replications"],
        **common,
    )


def _bootstrap_statistics(
    result: EstimationResult, y: np.ndarray, cfg: EstimatorConfig, B: int, seed: int, burn: int = 100
) -> np.ndarray:
    """Statistics recomputed on paths driven by resampled residuals."""
    if B < 1:
        raise DomainError("bootstrap needs at least one replication")
    T = y.shape[0]
    u = result.residuals - result.residuals.mean(axis=0)
    model = VarModel(tuple(result.theta_hat), NoiseSpec("gaussian"))
    rng = np.random.default_rng(seed)
    single = replace(cfg, multistart=1, flip_starts=False)
    out = []
    for b in range(B):
        idx = rng.integers(0, u.shape[0], size=T + 2 * burn)
        path = simulate(model, T, burn=burn, innovations=u[idx]) + y.mean(axis=0)
        try:
            fit = estimate(path, result.p, single, compute_covariance=False, initial=result.theta)
            stat, _ = _statistic(Problem(fit.residuals, 0, single), np.zeros(0))
        except NumericalError as exc:
            logger.debug("bootstrap replication %d failed: %s", b, exc)
            continue
        out.append(stat)
    if not out:
        raise NumericalError("every bootstrap replication failed")
    return np.asarray(out)
