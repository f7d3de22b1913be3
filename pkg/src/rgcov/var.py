"""Mixed causal-noncausal VAR(p) processes.

Residual maps, eigenstructure classification, the real-Jordan split of the
autoregressive matrix into causal (modulus < 1) and noncausal (modulus > 1)
blocks, and simulation of the strictly stationary solution.

Simulation works on the latent components: with ``Phi = A J A^{-1}`` the
causal block is recursed forward in time and the noncausal block backward,
``y2*_t = J2^{-1} (y2*_{t+1} - eps2*_{t+1})``, which is stable because
``J2^{-1}`` is a contraction. Recombining through ``A`` gives a path that
satisfies ``y_t = Phi y_{t-1} + eps_t`` exactly at every interior date.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DataError, DomainError, NotDiagonalizableError, UnitRootError
from .linalg import as_series

UNIT_BAND = 1e-8
DEFAULT_BURN = 200


def _phi_list(phi) -> list[np.ndarray]:
    if np.ndim(phi) < 3 and not isinstance(phi, (list, tuple)):
        phi = [phi]
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in phi]
    if not mats:
        raise DomainError("need at least one coefficient matrix")
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise DomainError(f"coefficient matrices must all be {n}x{n}, got {m.shape}")
    return mats


def companion(phi) -> np.ndarray:
    """``(n p) x (n p)`` companion matrix of ``Phi_1..Phi_p``."""
    mats = _phi_list(phi)
    n, p = mats[0].shape[0], len(mats)
    c = np.zeros((n * p, n * p))
    c[:n, :] = np.hstack(mats)
    if p > 1:
        c[n:, :-n] = np.eye(n * (p - 1))
    return c


def residuals(y, phi) -> np.ndarray:
    """``u_t = y_t - sum_k Phi_k y_{t-k}`` for ``t = p+1..T``; shape ``(T-p, n)``."""
    y = as_series(y)
    empty = not isinstance(phi, np.ndarray) and len(phi) == 0
    mats = [] if empty else _phi_list(phi)
    p = len(mats)
    T, n = y.shape
    if T <= p:
        raise DomainError(f"need T > p, got T={T}, p={p}")
    u = y[p:].copy()
    for k, m in enumerate(mats, start=1):
        if m.shape != (n, n):
            raise DomainError(f"coefficient shape {m.shape} does not match series dimension {n}")
        u -= y[p - k : T - k] @ m.T
    return u


@dataclass(frozen=True)
class Classification:
    n1: int
    n2: int
    moduli: np.ndarray  # ascending


def classify(phi) -> Classification:
    """Count companion eigenvalues inside (``n1``) and outside (``n2``) the unit circle."""
    lam = np.linalg.eigvals(companion(phi))
    mod = np.sort(np.abs(lam))
    if np.any(np.abs(mod - 1.0) < UNIT_BAND):
        raise UnitRootError("companion matrix has an eigenvalue on the unit circle", moduli=mod)
    n1 = int(np.sum(mod < 1.0))
    return Classification(n1, mod.size - n1, mod)


@dataclass(frozen=True)
class CausalNoncausalSplit:
    """``Phi = A blockdiag(J1, J2) A^{-1}`` with ``|eig(J1)| < 1 < |eig(J2)|``.

    ``J1`` and ``J2`` are real block-diagonal: complex pairs appear as
    ``[[a, b], [-b, a]]`` blocks.
    """

    n1: int
    n2: int
    J1: np.ndarray
    J2: np.ndarray
    A: np.ndarray
    A_inv: np.ndarray
    eigenvalues: np.ndarray  # complex, ordered like the columns of A (one entry per pair member)

    @property
    def J(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.J1, self.J2)

    @property
    def A1(self) -> np.ndarray:
        return self.A[:, : self.n1]

    @property
    def A2(self) -> np.ndarray:
        return self.A[:, self.n1 :]

    @property
    def A_up1(self) -> np.ndarray:
        return self.A_inv[: self.n1]

    @property
    def A_up2(self) -> np.ndarray:
        return self.A_inv[self.n1 :]

    def reconstruct(self) -> np.ndarray:
        return self.A @ self.J @ self.A_inv

    def components(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Latent causal and noncausal series ``(A^1 y_t, A^2 y_t)``, time-major."""
        y = as_series(y)
        if y.shape[1] != self.A.shape[0]:
            raise DomainError(f"series has {y.shape[1]} columns, split expects {self.A.shape[0]}")
        return y @ self.A_up1.T, y @ self.A_up2.T


def _sign_normalise(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def decompose(phi, cond_limit: float = 1e10) -> CausalNoncausalSplit:
    """Real-Jordan causal/noncausal split of ``Phi`` (or of the companion matrix when ``p > 1``).

    Within each group eigenvalues are ordered by decreasing modulus, then by
    real part. Raises :class:`NotDiagonalizableError` when the eigenvector
    matrix is numerically singular.
    """
    mats = _phi_list(phi)
    m = mats[0] if len(mats) == 1 else companion(mats)
    if not np.all(np.isfinite(m)):
        raise DataError("coefficient matrix contains non-finite values")
    lam, vec = np.linalg.eig(m)
    mod = np.abs(lam)
    if np.any(np.abs(mod - 1.0) < UNIT_BAND):
        raise UnitRootError("matrix has an eigenvalue on the unit circle", moduli=np.sort(mod))
    if np.linalg.cond(vec) > cond_limit:
        raise NotDiagonalizableError("eigenvector matrix is numerically singular")

    tol = 1e-10
    entries = []  # (modulus, real, columns, block, eigenvalues)
    for k, lk in enumerate(lam):
        scale = max(1.0, abs(lk))
        if abs(lk.imag) <= tol * scale:
            col = _sign_normalise(vec[:, k].real)
            entries.append((abs(lk), lk.real, [col], np.array([[lk.real]]), [complex(lk.real, 0.0)]))
        elif lk.imag > 0:
            v = vec[:, k]
            v = v / np.linalg.norm(v)
            a, b = lk.real, lk.imag
            block = np.array([[a, b], [-b, a]])
            entries.append((abs(lk), a, [v.real, v.imag], block, [lk, lk.conjugate()]))
    causal = sorted((e for e in entries if e[0] < 1.0), key=lambda e: (-e[0], -e[1]))
    noncausal = sorted((e for e in entries if e[0] > 1.0), key=lambda e: (-e[0], -e[1]))

    def assemble(group):
        if not group:
            return np.zeros((m.shape[0], 0)), np.zeros((0, 0)), []
        cols = [c for e in group for c in e[2]]
        return np.column_stack(cols), scipy.linalg.block_diag(*[e[3] for e in group]), [z for e in group for z in e[4]]

    A1, J1, ev1 = assemble(causal)
    A2, J2, ev2 = assemble(noncausal)
    A = np.hstack([A1, A2])
    if A.shape[1] != m.shape[0]:
        raise NotDiagonalizableError("could not assemble a full set of real Jordan columns")
    if np.linalg.cond(A) > cond_limit:
        raise NotDiagonalizableError("real Jordan basis is numerically singular")
    A_inv = np.linalg.inv(A)
    return CausalNoncausalSplit(J1.shape[0], J2.shape[0], J1, J2, A, A_inv, np.array(ev1 + ev2))


def draw_student_t(nu: float, scale, dim: int, count: int, seed=None) -> np.ndarray:
    """``count`` i.i.d. multivariate Student-t draws, shape ``(count, dim)``.

    ``z * sqrt(nu / w)`` with ``z ~ N(0, scale)`` and ``w ~ chi2(nu)``.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not nu > 2:
        raise DomainError(f"degrees of freedom must exceed 2, got {nu}")
    rng = np.random.default_rng(seed)
    chol = _scale_cholesky(scale, dim)
    z = rng.standard_normal((count, dim)) @ chol.T
    w = rng.chisquare(nu, size=count)
    return z * np.sqrt(nu / w)[:, None]


def _scale_cholesky(scale, dim: int) -> np.ndarray:
    if scale is None:
        return np.eye(dim)
    s = np.atleast_2d(np.asarray(scale, dtype=float))
    if s.shape != (dim, dim):
        raise DomainError(f"scale matrix must be {dim}x{dim}, got {s.shape}")
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise DomainError("scale matrix must be symmetric positive definite") from exc


@dataclass(frozen=True)
class NoiseSpec:
    """Innovation distribution.

    ``kind`` is ``"student_t"``, ``"gaussian"`` or ``"custom"``. A custom spec
    carries ``sampler(rng, count, dim) -> (count, dim)`` and is not
    serialisable.
    """

    kind: str = "student_t"
    dof: float = 4.0
    scale: np.ndarray | None = None
    sampler: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("student_t", "gaussian", "custom"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.kind == "student_t" and not self.dof > 2:
            raise DomainError(f"Student-t degrees of freedom must exceed 2, got {self.dof}")
        if self.kind == "custom" and self.sampler is None:
            raise DomainError("custom noise needs a sampler")

    def draw(self, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
        if self.kind == "student_t":
            return draw_student_t(self.dof, self.scale, dim, count, rng)
        if self.kind == "gaussian":
            return rng.standard_normal((count, dim)) @ _scale_cholesky(self.scale, dim).T
        out = np.asarray(self.sampler(rng, count, dim), dtype=float)
        if out.shape != (count, dim):
            raise DomainError(f"custom sampler returned shape {out.shape}, expected {(count, dim)}")
        return out

    def to_json(self) -> dict:
        if self.kind == "custom":
            raise DomainError("custom noise cannot be serialised")
        d = {"kind": self.kind}
        if self.kind == "student_t":
            d["dof"] = float(self.dof)
        if self.scale is not None:
            d["scale"] = np.asarray(self.scale, dtype=float).tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "NoiseSpec":
        kind = d.get("kind", "student_t")
        scale = d.get("scale")
        return cls(kind=kind, dof=float(d.get("dof", 4.0)), scale=None if scale is None else np.asarray(scale, dtype=float))


@dataclass(frozen=True)
class VarModel:
    """VAR(p) coefficients plus innovation distribution.

    Construction fails with :class:`UnitRootError` if any companion
    eigenvalue lies within ``1e-8`` of the unit circle.
    """

    phi: tuple
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(_phi_list(self.phi)))
        classify(self.phi)

    @property
    def n(self) -> int:
        return self.phi[0].shape[0]

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def theta(self) -> np.ndarray:
        """``[vec Phi_1', ..., vec Phi_p']'`` (column-stacking)."""
        return np.concatenate([m.ravel(order="F") for m in self.phi])

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "phi": [m.tolist() for m in self.phi],
            "noise": self.noise.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "VarModel":
        try:
            phi = [np.asarray(m, dtype=float) for m in d["phi"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed model JSON: {exc}") from exc
        if "n" in d and phi and phi[0].shape[0] != int(d["n"]):
            raise DomainError("model 'n' does not match coefficient shape")
        if "p" in d and len(phi) != int(d["p"]):
            raise DomainError("model 'p' does not match number of coefficient matrices")
        return cls(tuple(phi), NoiseSpec.from_json(d.get("noise", {})))


def theta_to_phi(theta, n: int, p: int) -> list[np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    if theta.size != p * n * n:
        raise DomainError(f"theta has {theta.size} entries, expected {p * n * n}")
    return [theta[k * n * n : (k + 1) * n * n].reshape((n, n), order="F") for k in range(p)]


def phi_to_theta(phi) -> np.ndarray:
    return np.concatenate([m.ravel(order="F") for m in _phi_list(phi)])


def simulate(model: VarModel, T: int, burn: int = DEFAULT_BURN, seed=None, innovations=None) -> np.ndarray:
    """``T`` observations of the strictly stationary solution, shape ``(T, n)``.

    ``burn`` steps are discarded at each temporal end. When ``innovations``
    (shape ``(T + 2*burn, n)``) is given it replaces the random draws; the
    innovation driving observation ``t`` of the output is then
    ``innovations[burn + t]``.
    """
    if burn < 0:
        raise DomainError("burn must be >= 0")
    if T < 1:
        raise DomainError("T must be >= 1")
    split = decompose(model.phi)
    n, total = model.n, T + 2 * burn
    if innovations is None:
        eps = model.noise.draw(np.random.default_rng(seed), total, n)
    else:
        eps = np.asarray(innovations, dtype=float)
        if eps.shape != (total, n):
            raise DomainError(f"innovations must have shape {(total, n)}, got {eps.shape}")
    big = np.zeros((total, split.A.shape[0]))
    big[:, :n] = eps
    e1 = big @ split.A_up1.T
    e2 = big @ split.A_up2.T

    y1 = np.zeros_like(e1)
    if split.n1:
        J1 = split.J1
        y1[0] = e1[0]
        for t in range(1, total):
            y1[t] = J1 @ y1[t - 1] + e1[t]
    y2 = np.zeros_like(e2)
    if split.n2:
        J2inv = np.linalg.inv(split.J2)
        for t in range(total - 2, -1, -1):
            y2[t] = J2inv @ (y2[t + 1] - e2[t + 1])
    state = y1 @ split.A1.T + y2 @ split.A2.T
    return state[burn : burn + T, :n].copy()
