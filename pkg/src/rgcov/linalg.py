"""Dense symmetric-matrix kernel.

Sample autocovariances, ridge shifts, Sherman-Morrison rank-one updates and
the recursive inverse built from them, plus a symmetric eigendecomposition
with a deterministic sign convention and inverse square roots.

Series are time-major throughout: an array of shape ``(T, K)`` holds ``T``
observations of a ``K``-variate process.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError, NearSingularError

SYMMETRY_RTOL = 1e-12


def as_series(v) -> np.ndarray:
    """Return ``v`` as a float ``(T, K)`` array, promoting 1-D input to ``K=1``."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DomainError(f"expected a (T, K) series, got shape {arr.shape}")
    return arr


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DomainError(f"expected a non-empty square matrix, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise DomainError("matrix is not symmetric")
    return m


def autocovariance(v, h: int) -> np.ndarray:
    """Mean-corrected lag-``h`` sample autocovariance.

    ``(1/T) * sum_{t=h+1}^{T} (v_t - vbar)(v_{t-h} - vbar)'`` with ``vbar`` the
    full-sample mean. The divisor is ``T`` for every lag.
    """
    return autocovariances(v, h)[h]


def autocovariances(v, max_lag: int) -> np.ndarray:
    """Stack of autocovariances for lags ``0..max_lag``, shape ``(max_lag+1, K, K)``.

    The lag-0 matrix is symmetrised exactly.
    """
    arr = as_series(v)
    T = arr.shape[0]
    if max_lag < 0 or max_lag >= T:
        raise DomainError(f"lag {max_lag} must satisfy 0 <= lag < T={T}")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    c = arr - arr.mean(axis=0)
    out = np.empty((max_lag + 1, arr.shape[1], arr.shape[1]))
    g0 = c.T @ c / T
    out[0] = 0.5 * (g0 + g0.T)
    for h in range(1, max_lag + 1):
        out[h] = c[h:].T @ c[:-h] / T
    return out


def ridge(gamma0, delta: float) -> np.ndarray:
    """Return ``delta * I + gamma0``."""
    if delta < 0 or not np.isfinite(delta):
        raise DomainError(f"shrinkage delta must be finite and >= 0, got {delta}")
    g = _check_symmetric(gamma0)
    return g + delta * np.eye(g.shape[0])


def sm_update(c_prev, x, rho2: float) -> np.ndarray:
    """Sherman-Morrison step: inverse of ``C_prev^{-1} + rho2 * x x'``.

    ``C_prev - rho2 C x x' C / (1 + rho2 x' C x)``, using the symmetry of ``C``.
    """
    c = np.asarray(c_prev, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    if c.ndim != 2 or c.shape != (x.size, x.size):
        raise DomainError(f"dimension mismatch: C is {c.shape}, x has {x.size} entries")
    cx = c @ x
    denom = 1.0 + rho2 * (x @ cx)
    return c - (rho2 / denom) * np.outer(cx, cx)


def recursive_inverse(xs: Sequence, rho1: float, rho2: float) -> np.ndarray:
    """Inverse of ``rho1 * I + rho2 * sum_t x_t x_t'`` by rank-one updates.

    Seeded with the closed form for the first observation, then one
    :func:`sm_update` per remaining observation. Costs ``O(T K^2)`` and never
    factorises a matrix.
    """
    if not rho1 > 0:
        raise DomainError(f"rho1 must be > 0, got {rho1}")
    if not rho2 > 0:
        raise DomainError(f"rho2 must be > 0, got {rho2}")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.shape[0] < 1:
        raise DomainError("need at least one vector")
    K = xs.shape[1]
    x1 = xs[0]
    c = np.eye(K) / rho1 - (rho2 / rho1**2) * np.outer(x1, x1) / (1.0 + (rho2 / rho1) * (x1 @ x1))
    for x in xs[1:]:
        cx = c @ x
        c -= (rho2 / (1.0 + rho2 * (x @ cx))) * np.outer(cx, cx)
    return c


@dataclass(frozen=True)
class SpectralDecomposition:
    """``m = Q diag(eigenvalues) Q'`` with eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def sym_eigen(m) -> SpectralDecomposition:
    """Symmetric eigendecomposition, descending, deterministic column signs.

    Each eigenvector is flipped so that its largest-magnitude coordinate
    (the first one, on ties) is positive.
    """
    m = _check_symmetric(m)
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    w = w[::-1].copy()
    q = q[:, ::-1].copy()
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    q *= signs
    return SpectralDecomposition(w, q)


def inv_sqrt(m, floor: float | None = None) -> np.ndarray:
    """``Q diag(lambda^{-1/2}) Q'`` for a symmetric positive definite ``m``.

    Raises :class:`NearSingularError` when an eigenvalue does not exceed
    ``floor`` (default ``1e-12`` times the largest eigenvalue).
    """
    dec = sym_eigen(m)
    lam = dec.eigenvalues
    if floor is None:
        floor = 1e-12 * max(lam[0], 0.0)
    if lam[-1] <= floor:
        cond = lam[0] / lam[-1] if lam[-1] > 0 else float("inf")
        raise NearSingularError(
            f"eigenvalue {lam[-1]:.6g} does not exceed floor {floor:.6g}; "
            "matrix is not safely invertible (consider ridge regularisation)",
            min_eigenvalue=lam[-1],
            condition=cond,
        )
    q = dec.eigenvectors
    return (q / np.sqrt(lam)) @ q.T
