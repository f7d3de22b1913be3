"""GCov, diagonal GCov and ridge-regularised GCov estimation of VAR(p) models.

The objective at a candidate ``theta`` is

    L(theta) = sum_{h=1..H} Tr[ G(h) W G(h)' W ],   W = (G(0) + delta I)^{-1}

where ``G(h)`` are sample autocovariances of the transformed residuals.
``delta = 0`` is plain GCov; diagonal weighting replaces ``G(0)`` by its
diagonal before adding ``delta I``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, DomainError, EstimationError, NearSingularError
from .linalg import as_series, autocovariances, recursive_inverse
from .transforms import TransformedSeries, TransformSpec, apply, apply_derivative
from .var import companion, phi_to_theta, residuals, theta_to_phi

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
PENALTY = 1e10


class WeakIdentificationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ShrinkageRegime:
    """Fixed ``delta`` or ``delta_T = eta / T``."""

    mode: str = "fixed"
    value: float = 0.0

    def __post_init__(self):
        if self.mode not in ("fixed", "over_t"):
            raise ConfigurationError(f"unknown shrinkage mode {self.mode!r}")
        if not (self.value >= 0 and np.isfinite(self.value)):
            raise ConfigurationError(f"shrinkage parameter must be finite and >= 0, got {self.value}")

    @classmethod
    def fixed(cls, delta: float) -> "ShrinkageRegime":
        return cls("fixed", float(delta))

    @classmethod
    def over_t(cls, eta: float) -> "ShrinkageRegime":
        return cls("over_t", float(eta))

    def effective(self, T: int) -> float:
        return self.value if self.mode == "fixed" else self.value / T

    def to_json(self) -> dict:
        return {self.mode: self.value}

    @classmethod
    def from_json(cls, d) -> "ShrinkageRegime":
        if isinstance(d, (int, float)):
            return cls.fixed(d)
        if isinstance(d, dict) and len(d) == 1:
            (k, v), = d.items()
            k = {"delta": "fixed", "eta": "over_t", "overt": "over_t"}.get(k.lower(), k.lower())
            return cls(k, float(v))
        raise ConfigurationError(f"cannot parse shrinkage regime {d!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything that defines one estimator besides the data and the VAR order.

    ``multistart`` counts the least-squares start, the zero start and
    ``multistart - 2`` seeded perturbations of the least-squares fit. With
    ``flip_starts`` the least-squares fit is also restarted with each real
    eigenvalue reflected through the unit circle, which is how the optimizer
    reaches noncausal modes that second-order information cannot see.
    """

    lags: int = 2
    transforms: TransformSpec = field(default_factory=lambda: TransformSpec(["linear", "square"]))
    regime: ShrinkageRegime = field(default_factory=ShrinkageRegime)
    weighting: str = "full"
    multistart: int = 5
    flip_starts: bool = True
    max_iter: int = 2000
    simplex_iter: int | None = None
    tol: float = 1e-8
    backend: str = "dense"
    seed: int = 0
    perturbation: float = 0.3
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.transforms, TransformSpec):
            object.__setattr__(self, "transforms", TransformSpec(self.transforms))
        if self.lags < 1:
            raise ConfigurationError("lags H must be >= 1")
        if self.weighting not in ("full", "diagonal"):
            raise ConfigurationError(f"weighting must be 'full' or 'diagonal', got {self.weighting!r}")
        if self.backend not in ("dense", "sherman_morrison"):
            raise ConfigurationError(f"backend must be 'dense' or 'sherman_morrison', got {self.backend!r}")
        if self.backend == "sherman_morrison" and self.weighting != "full":
            raise ConfigurationError("the Sherman-Morrison backend only applies to full weighting")
        if self.multistart < 1:
            raise ConfigurationError("multistart must be >= 1")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        kind = "dgcov" if self.weighting == "diagonal" else "rgcov"
        return f"{kind}[{self.regime.mode}={self.regime.value:g}]"

    def with_regime(self, regime: ShrinkageRegime) -> "EstimatorConfig":
        return replace(self, regime=regime)

    def check_dimensions(self, n: int, p: int) -> None:
        K = self.transforms.J * n
        dim = p * n * n
        if K * K * self.lags < dim:
            raise ConfigurationError(f"K^2 H = {K * K * self.lags} is smaller than dim(theta) = {dim}")
        if self.transforms.J < p * n:
            warnings.warn(
                f"only J={self.transforms.J} transforms for p*n={p * n}; identification may be weak",
                WeakIdentificationWarning,
                stacklevel=3,
            )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lags": self.lags,
            "transforms": self.transforms.to_json(),
            "regime": self.regime.to_json(),
            "weighting": self.weighting,
            "optimizer": {
                "multistart": self.multistart,
                "flip_starts": self.flip_starts,
                "max_iter": self.max_iter,
                "simplex_iter": self.simplex_iter,
                "tol": self.tol,
                "seed": self.seed,
                "perturbation": self.perturbation,
            },
            "backend": self.backend,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EstimatorConfig":
        known = {"name", "lags", "transforms", "regime", "weighting", "optimizer", "backend", "delta", "eta"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown estimator config keys: {sorted(unknown)}")
        kw = {}
        for key in ("name", "lags", "weighting", "backend"):
            if key in d:
                kw[key] = d[key]
        if "transforms" in d:
            kw["transforms"] = TransformSpec(d["transforms"])
        if "regime" in d:
            kw["regime"] = ShrinkageRegime.from_json(d["regime"])
        elif "delta" in d:
            kw["regime"] = ShrinkageRegime.fixed(d["delta"])
        elif "eta" in d:
            kw["regime"] = ShrinkageRegime.over_t(d["eta"])
        opt = d.get("optimizer", {})
        for key in ("multistart", "flip_starts", "max_iter", "simplex_iter", "tol", "seed", "perturbation"):
            if key in opt:
                kw[key] = opt[key]
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


class Problem:
    """Objective, gradient and Jacobians for one data set, order and configuration.

    ``T`` is the sample size used by the ``eta / T`` regime; it defaults to
    the number of observations in ``data``.
    """

    def __init__(self, data, p: int, config: EstimatorConfig, T: int | None = None):
        self.y = as_series(data)
        if not np.all(np.isfinite(self.y)):
            raise DomainError("data contain non-finite values")
        self.p = int(p)
        self.n = self.y.shape[1]
        self.config = config
        self.T = self.y.shape[0] if T is None else int(T)
        self.nobs = self.y.shape[0] - self.p
        if self.nobs <= config.lags:
            raise DomainError(f"need more than p + H = {self.p + config.lags} observations")
        self.delta = config.regime.effective(self.T)
        if config.backend == "sherman_morrison" and not self.delta > 0:
            raise ConfigurationError("the Sherman-Morrison backend needs delta > 0")
        self.dim = self.p * self.n * self.n
        self._lagged = [self.y[self.p - k : self.y.shape[0] - k] for k in range(1, self.p + 1)]

    # -- pieces -----------------------------------------------------------
    def residuals(self, theta) -> np.ndarray:
        return residuals(self.y, theta_to_phi(theta, self.n, self.p) if self.p else [])

    def transformed(self, theta) -> TransformedSeries:
        return apply(self.residuals(theta), self.config.transforms)

    def gammas(self, theta) -> np.ndarray:
        return autocovariances(self.transformed(theta).values, self.config.lags)

    def weight(self, gammas: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        """Inverse of the (regularised, possibly diagonal) lag-0 matrix.

        Raises :class:`NearSingularError` when its condition number exceeds ``1e12``.
        """
        if self.config.backend == "sherman_morrison":
            c = v - v.mean(axis=0)
            return recursive_inverse(c, self.delta, 1.0 / c.shape[0])
        return self._weight_and_value(gammas, v)[0]

    def whitener(self, gammas: np.ndarray) -> np.ndarray:
        """Symmetric inverse square root of the regularised lag-0 matrix.

        Diagonal weighting returns the diagonal as a vector.
        """
        g0 = gammas[0]
        if self.config.weighting == "diagonal":
            d = np.diag(g0) + self.delta
            self._check_condition(d.min(), d.max())
            return 1.0 / np.sqrt(d)
        w, q = np.linalg.eigh(g0 + self.delta * np.eye(g0.shape[0]))
        self._check_condition(w[0], w[-1])
        return (q / np.sqrt(w)) @ q.T

    @staticmethod
    def _check_condition(lo: float, hi: float) -> None:
        if not lo > 0 or hi / lo > COND_LIMIT:
            cond = hi / lo if lo > 0 else float("inf")
            raise NearSingularError(
                f"lag-0 weight matrix is near singular (min eigenvalue {lo:.3g}, condition {cond:.3g}); "
                "use a positive shrinkage delta",
                min_eigenvalue=lo,
                condition=cond,
            )

    def _value_from(self, gammas: np.ndarray, W: np.ndarray) -> float:
        total = 0.0
        for h in range(1, gammas.shape[0]):
            total += float(np.sum((gammas[h] @ W) * (W @ gammas[h])))
        return total

    def value_from_gammas(self, gammas: np.ndarray, v: np.ndarray | None = None) -> float:
        """Objective from the autocovariances ``gammas`` of the transformed series ``v``."""
        return self._weight_and_value(gammas, v)[1]

    def _weight_and_value(self, gammas: np.ndarray, v: np.ndarray | None) -> tuple[np.ndarray, float]:
        """``W`` and the objective ``sum_h ||S G(h) S||_F^2`` with ``S = W^{1/2}``.

        Working with ``S`` keeps full accuracy when the lag-0 matrix is badly
        conditioned; the Sherman-Morrison backend has only ``W`` and uses it.
        """
        if self.config.backend == "sherman_morrison":
            W = self.weight(gammas, v)
            return W, self._value_from(gammas, W)
        S = self.whitener(gammas)
        total = 0.0
        for h in range(1, gammas.shape[0]):
            r = S[:, None] * gammas[h] * S[None, :] if S.ndim == 1 else S @ gammas[h] @ S
            total += float(np.sum(r * r))
        W = np.diag(S * S) if S.ndim == 1 else S @ S
        return W, total

    def value(self, theta) -> float:
        tv = self.transformed(theta)
        return self.value_from_gammas(autocovariances(tv.values, self.config.lags), tv.values)

    def safe_value(self, theta) -> float:
        try:
            val = self.value(theta)
        except NearSingularError:
            return PENALTY
        return val if np.isfinite(val) else PENALTY

    # -- derivatives ------------------------------------------------------
    def gamma_jacobian(self, theta) -> np.ndarray:
        """Analytic ``d Gamma(h) / d theta_i``; shape ``(dim, H+1, K, K)``."""
        u = self.residuals(theta)
        spec = self.config.transforms
        v = apply(u, spec).values
        dv_du = apply_derivative(u, spec)
        c = v - v.mean(axis=0)
        n, J, H = self.n, spec.J, self.config.lags
        K, N = J * n, c.shape[0]
        out = np.zeros((self.dim, H + 1, K, K))
        i = 0
        for k in range(self.p):
            ylag = self._lagged[k]
            for col in range(n):
                for row in range(n):
                    cols = row + n * np.arange(J)
                    dv = -dv_du[:, cols] * ylag[:, col : col + 1]
                    dc = dv - dv.mean(axis=0)
                    for h in range(H + 1):
                        lead_c, lag_c = c[h:], c[: N - h]
                        lead_d, lag_d = dc[h:], dc[: N - h]
                        out[i, h, cols, :] += lead_d.T @ lag_c / N
                        out[i, h, :, cols] += (lead_c.T @ lag_d / N).T
                    i += 1
        return out

    def numeric_gamma_jacobian(self, theta, rel_step: float = 1e-6) -> np.ndarray:
        """Central finite differences of ``Gamma(h)``, step ``rel_step * (1 + |theta_i|)``."""
        theta = np.asarray(theta, dtype=float)
        base = self.gammas(theta)
        out = np.zeros((self.dim,) + base.shape)
        for i in range(self.dim):
            step = rel_step * (1.0 + abs(theta[i]))
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            out[i] = (self.gammas(tp) - self.gammas(tm)) / (2 * step)
        return out

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        """Objective and its analytic gradient."""
        tv = self.transformed(theta)
        g = autocovariances(tv.values, self.config.lags)
        W, val = self._weight_and_value(g, tv.values)
        dG = self.gamma_jacobian(theta)
        diagonal = self.config.weighting == "diagonal"
        grad = np.zeros(self.dim)
        for h in range(1, g.shape[0]):
            gh = g[h]
            gw = gh @ W
            A = W @ gh.T @ W  # coefficient on dGamma(h)
            B = W @ (gh.T @ W @ gw + gw @ gh.T @ W)  # coefficient on dGamma(0)
            grad += 2.0 * np.einsum("kl,ilk->i", A, dG[:, h])
            if diagonal:
                grad -= np.einsum("k,ikk->i", np.diag(B), dG[:, 0])
            else:
                grad -= np.einsum("kl,ilk->i", B, dG[:, 0])
        return val, grad

    def safe_value_and_grad(self, theta):
        try:
            val, grad = self.value_and_grad(theta)
        except NearSingularError:
            return PENALTY, np.zeros(self.dim)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return PENALTY, np.zeros(self.dim)
        return val, grad

    def numeric_gradient(self, theta, rel_step: float = 1e-6) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(self.dim)
        for i in range(self.dim):
            step = rel_step * (1.0 + abs(theta[i]))
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            out[i] = (self.value(tp) - self.value(tm)) / (2 * step)
        return out


def objective(theta, data, config: EstimatorConfig, T: int | None = None, p: int | None = None) -> float:
    """Regularised GCov objective at ``theta`` (``p`` inferred from its length)."""
    y = as_series(data)
    theta = np.asarray(theta, dtype=float).ravel()
    n = y.shape[1]
    if p is None:
        if theta.size % (n * n):
            raise DomainError(f"theta length {theta.size} is not a multiple of n^2 = {n * n}")
        p = theta.size // (n * n)
    return Problem(y, p, config, T).value(theta)


def least_squares_var(data, p: int) -> np.ndarray:
    """OLS VAR(p) fit on demeaned data, returned as ``theta``."""
    y = as_series(data)
    y = y - y.mean(axis=0)
    T, n = y.shape
    if p == 0:
        return np.zeros(0)
    X = np.hstack([y[p - k : T - k] for k in range(1, p + 1)])
    B, *_ = np.linalg.lstsq(X, y[p:], rcond=None)
    mats = [B[k * n : (k + 1) * n].T for k in range(p)]
    return phi_to_theta(mats)


def _flip_starts(theta_ls: np.ndarray, n: int, p: int) -> list[tuple[str, np.ndarray]]:
    c = companion(theta_to_phi(theta_ls, n, p))
    lam, vec = np.linalg.eig(c)
    try:
        vinv = np.linalg.inv(vec)
    except np.linalg.LinAlgError:
        return []
    out = []
    for k, lk in enumerate(lam):
        if abs(lk.imag) > 1e-10 or abs(lk) < 1e-3:
            continue
        lam2 = lam.copy()
        lam2[k] = 1.0 / lk.real
        c2 = (vec * lam2) @ vinv
        if np.max(np.abs(c2.imag)) > 1e-8:
            continue
        out.append((f"flip{k}", phi_to_theta([c2.real[:n, j * n : (j + 1) * n] for j in range(p)])))
    return out


def starting_points(data, p: int, config: EstimatorConfig) -> list[tuple[str, np.ndarray]]:
    y = as_series(data)
    n = y.shape[1]
    ls = least_squares_var(y, p)
    starts = [("ls", ls)]
    if config.multistart >= 2:
        starts.append(("zero", np.zeros_like(ls)))
    rng = np.random.default_rng(config.seed)
    for j in range(max(0, config.multistart - 2)):
        starts.append((f"perturb{j}", ls + config.perturbation * rng.standard_normal(ls.size)))
    if config.flip_starts and p > 0:
        starts.extend(_flip_starts(ls, n, p))
    return starts


@dataclass
class EstimationResult:
    theta: np.ndarray
    n: int
    p: int
    objective_value: float
    residuals: np.ndarray
    transformed: TransformedSeries
    config: EstimatorConfig
    delta: float
    T: int
    converged: bool
    optimizer_trace: list = field(default_factory=list)
    asymptotic_cov: np.ndarray | None = None
    covariance_note: str | None = None

    @property
    def theta_hat(self) -> list[np.ndarray]:
        return theta_to_phi(self.theta, self.n, self.p) if self.p else []

    @property
    def dim_theta(self) -> int:
        return self.theta.size

    @property
    def regime_used(self) -> ShrinkageRegime:
        return self.config.regime

    def eigenvalue_moduli(self) -> np.ndarray:
        if not self.p:
            return np.zeros(0)
        return np.sort(np.abs(np.linalg.eigvals(companion(self.theta_hat))))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "T": self.T,
            "coefficients": [m.tolist() for m in self.theta_hat],
            "objective": self.objective_value,
            "delta": self.delta,
            "regime": self.config.regime.to_json(),
            "converged": self.converged,
            "eigenvalue_moduli": self.eigenvalue_moduli().tolist(),
            "asymptotic_cov": None if self.asymptotic_cov is None else self.asymptotic_cov.tolist(),
            "covariance_note": self.covariance_note,
            "weight_dim": self.transformed.K,
            "config": self.config.to_json(),
            "optimizer_trace": self.optimizer_trace,
        }


BFGS_RESTARTS = 5


def _simplex(problem: Problem, x0: np.ndarray, config: EstimatorConfig, iters: int) -> optimize.OptimizeResult:
    return optimize.minimize(
        problem.safe_value,
        x0,
        method="Nelder-Mead",
        options={"maxiter": iters, "xatol": 1e-4, "fatol": config.tol * 10, "adaptive": x0.size > 4},
    )


def _quasi_newton(problem: Problem, x: np.ndarray, f: float, config: EstimatorConfig) -> tuple[np.ndarray, float, bool, int]:
    """BFGS with the analytic gradient, restarted while it keeps improving.

    Transforms such as ``sign`` or ``log|u|`` make the objective only
    piecewise smooth, so a run often ends on a line-search failure with a
    stale Hessian approximation; restarting resets it.
    """
    nfev = 0
    ok = False
    for _ in range(BFGS_RESTARTS):
        res = optimize.minimize(
            problem.safe_value_and_grad,
            x,
            jac=True,
            method="BFGS",
            options={"maxiter": config.max_iter, "gtol": config.tol},
        )
        nfev += int(res.nfev)
        moved = float(np.max(np.abs(res.x - x)))
        improved = f - float(res.fun)
        if res.fun <= f:
            x, f = res.x, float(res.fun)
        if res.success or moved < 1e-7 or improved < config.tol * max(1.0, abs(f)):
            ok = True
            break
    return x, f, ok, nfev


def _run_start(problem: Problem, x0: np.ndarray, config: EstimatorConfig) -> tuple[np.ndarray, float, bool, dict]:
    """Simplex descent from ``x0`` followed by a quasi-Newton polish.

    The simplex stage does not follow gradients, so it is not drawn into the
    narrow dips created when a residual passes close to zero under the
    logarithmic transforms. The start counts as converged when either stage
    met its tolerance.
    """
    f0 = problem.safe_value(x0)
    info = {"f0": f0}
    x, f = x0, f0
    iters = config.simplex_iter if config.simplex_iter is not None else 100 * x0.size
    nm_ok = False
    if iters > 0:
        nm = _simplex(problem, x0, config, iters)
        nm_ok = bool(nm.success)
        info["simplex_nfev"] = int(nm.nfev)
        if nm.fun <= f:
            x, f = nm.x, float(nm.fun)
    qn_ok = False
    if f < PENALTY:
        x, f, qn_ok, nfev = _quasi_newton(problem, x, f, config)
        info["nfev"] = nfev
    ok = f < PENALTY and (nm_ok or qn_ok)
    info.update(f=f, success=bool(ok))
    return x, f, ok, info


FLIP_ROUNDS = 2


def _flip_refine(problem: Problem, best, config: EstimatorConfig, trace: list, any_ok: bool):
    """Re-optimise from the best point with each real root reflected through the unit circle.

    A causal fit and its mirror image with a root ``lambda`` replaced by
    ``1 / lambda`` share their second-order properties, so a local search
    rarely crosses from one to the other. Reflection moves directly between
    them; a round stops as soon as no reflected start improves the objective.
    """
    for rnd in range(FLIP_ROUNDS):
        improved = False
        for label, x0 in _flip_starts(best[0], problem.n, problem.p):
            x, f, ok, info = _run_start(problem, x0, config)
            info["start"] = f"refine{rnd}-{label}"
            trace.append(info)
            any_ok = any_ok or ok
            if f < best[1] - config.tol:
                best = (x, f, ok)
                improved = True
        if not improved:
            break
    return best, any_ok


def estimate(
    data,
    p: int,
    config: EstimatorConfig,
    T: int | None = None,
    compute_covariance: bool = True,
    initial=None,
) -> EstimationResult:
    """Multistart minimisation of the regularised GCov objective over VAR(p) coefficients.

    Returns the lowest local minimum across all starts. ``converged`` is
    false when no start satisfied its stopping tolerance. ``p = 0`` yields the
    degenerate no-parameter fit whose residuals are the data. ``initial``
    replaces the multistart schedule by that single starting value.
    """
    y = as_series(data)
    if p < 0:
        raise DomainError("p must be >= 0")
    problem = Problem(y, p, config, T)
    if p > 0:
        config.check_dimensions(problem.n, p)
    trace = []
    best = None
    any_ok = False
    if p == 0:
        theta = np.zeros(0)
        f = problem.value(theta)
        best = (theta, f, True)
        trace.append({"start": "none", "f": f})
    else:
        if initial is not None:
            x_init = np.asarray(initial, dtype=float).ravel()
            if x_init.size != problem.dim:
                raise DomainError(f"initial value has {x_init.size} entries, expected {problem.dim}")
            schedule = [("initial", x_init)]
        else:
            schedule = starting_points(y, p, config)
        for label, x0 in schedule:
            x, f, ok, info = _run_start(problem, x0, config)
            info["start"] = label
            trace.append(info)
            logger.debug("start %s: f=%.6g ok=%s", label, f, ok)
            if f >= PENALTY:
                continue
            if best is None or f < best[1]:
                best = (x, f, ok)
            any_ok = any_ok or ok
        if best is None:
            raise EstimationError(
                "every start hit a near-singular weight matrix; use a positive shrinkage delta"
            )
        if config.flip_starts and initial is None:
            best, any_ok = _flip_refine(problem, best, config, trace, any_ok)
    theta, f, ok = best
    ok = ok or any_ok
    u = problem.residuals(theta)
    result = EstimationResult(
        theta=theta,
        n=problem.n,
        p=p,
        objective_value=float(f),
        residuals=u,
        transformed=apply(u, config.transforms),
        config=config,
        delta=problem.delta,
        T=problem.T,
        converged=bool(ok),
        optimizer_trace=trace,
    )
    if compute_covariance and p > 0 and ok:
        try:
            result.asymptotic_cov = asymptotic_covariance(result, y, config)
        except NearSingularError:
            logger.warning("asymptotic covariance unavailable: weight matrix near singular")
        if not config.transforms.smooth:
            rough = sorted({t.name for t in config.transforms if not t.smooth})
            result.covariance_note = (
                f"transforms {', '.join(rough)} are not continuously differentiable; the finite-difference "
                "Jacobian of the sample autocovariances is unstable, so the plug-in covariance is unreliable"
            )
    return result


@dataclass(frozen=True)
class SandwichMatrices:
    """Plug-in ``J``, ``I`` and the resulting covariance of ``sqrt(T)(theta_hat - theta0)``."""

    J: np.ndarray
    I: np.ndarray
    avar: np.ndarray
    nobs: int
    generalized_inverse: bool


def sandwich_matrices(theta, data, p: int, config: EstimatorConfig, T: int | None = None, jacobian: str = "numeric") -> SandwichMatrices:
    """``J = 2 sum_h X_h'(W x W)X_h``, ``I = 4 sum_h X_h'(W x W)(G0 x G0)(W x W)X_h``.

    ``X_h = d vec Gamma(h) / d theta'`` evaluated at ``theta`` (central
    differences by default) and ``W`` the regularised lag-0 inverse.
    """
    problem = Problem(data, p, config, T)
    theta = np.asarray(theta, dtype=float)
    g = problem.gammas(theta)
    W = problem.weight(g, problem.transformed(theta).values)
    dG = problem.numeric_gamma_jacobian(theta) if jacobian == "numeric" else problem.gamma_jacobian(theta)
    if config.weighting == "full":
        # W G0 W with G0 = W^{-1} - delta I, without re-multiplying an ill-conditioned G0
        M = W - problem.delta * (W @ W)
    else:
        M = W @ g[0] @ W
    dim = theta.size
    Jm = np.zeros((dim, dim))
    Im = np.zeros((dim, dim))
    for h in range(1, g.shape[0]):
        X = dG[:, h]  # (dim, K, K)
        WXW = np.einsum("kl,ilm,mn->ikn", W, X, W)
        MXM = np.einsum("kl,ilm,mn->ikn", M, X, M)
        Jm += 2.0 * np.einsum("ikn,jkn->ij", X, WXW)
        Im += 4.0 * np.einsum("ikn,jkn->ij", X, MXM)
    Jm = 0.5 * (Jm + Jm.T)
    Im = 0.5 * (Im + Im.T)
    ginv = False
    if np.linalg.cond(Jm) > COND_LIMIT:
        ginv = True
        warnings.warn("J matrix is singular; using a generalized inverse (weak identification)", WeakIdentificationWarning, stacklevel=2)
        Jinv = np.linalg.pinv(Jm, hermitian=True)
    else:
        Jinv = np.linalg.inv(Jm)
    avar = Jinv @ Im @ Jinv
    return SandwichMatrices(Jm, Im, 0.5 * (avar + avar.T), problem.nobs, ginv)


def efficient_avar(theta, data, p: int, config: EstimatorConfig, T: int | None = None) -> np.ndarray:
    """Inverse of ``sum_h X_h'(G0^{-1} x G0^{-1})X_h``: the asymptotic covariance when ``delta -> 0``."""
    cfg = config.with_regime(ShrinkageRegime.fixed(0.0))
    problem = Problem(data, p, cfg, T)
    g = problem.gammas(theta)
    W = problem.weight(g)
    dG = problem.numeric_gamma_jacobian(theta)
    dim = np.asarray(theta).size
    S = np.zeros((dim, dim))
    for h in range(1, g.shape[0]):
        X = dG[:, h]
        S += np.einsum("ikn,jkn->ij", X, np.einsum("kl,ilm,mn->ikn", W, X, W))
    return np.linalg.inv(0.5 * (S + S.T))


def asymptotic_covariance(result: EstimationResult, data, config: EstimatorConfig | None = None) -> np.ndarray:
    """Finite-sample covariance of ``theta_hat``: the sandwich divided by the sample size."""
    config = config or result.config
    sw = sandwich_matrices(result.theta, data, result.p, config, result.T)
    return sw.avar / sw.nobs


def select_delta_cv(data, p: int, config: EstimatorConfig, grid: Sequence[float], train_fraction: float = 0.8, eval_delta: float = 0.0):
    """Grid search for ``delta`` on a contiguous train/validation split.

    Each candidate is fitted on the first ``train_fraction`` of the sample and
    scored by the objective on the remainder evaluated with ``eval_delta``.
    Returns ``(best_delta, scores)``; ties go to the smaller ``delta``.
    """
    y = as_series(data)
    cut = int(round(train_fraction * y.shape[0]))
    train, valid = y[:cut], y[cut - p :]
    eval_cfg = config.with_regime(ShrinkageRegime.fixed(eval_delta))
    scores = {}
    for delta in sorted(float(d) for d in grid):
        res = estimate(train, p, config.with_regime(ShrinkageRegime.fixed(delta)), compute_covariance=False)
        try:
            scores[delta] = Problem(valid, p, eval_cfg).value(res.theta)
        except NearSingularError:
            scores[delta] = float("inf")
    best = min(scores, key=lambda d: (scores[d], d))
    return best, scores
