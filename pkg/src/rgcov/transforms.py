"""Nonlinear residual transforms.

A :class:`TransformSpec` is an ordered list of scalar functions ``a_1..a_J``.
Applied to an ``n``-variate residual series it yields the ``K = J*n``
variate series whose column ``j*n + i`` is ``a_j`` evaluated on residual
component ``i`` (transform-major ordering).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .linalg import as_series

LOG_EPS = 1e-12

NAMED = (
    "linear",
    "square",
    "cube",
    "sign",
    "abs",
    "abscube",
    "logabs",
    "logabssq",
    "logabscube",
    "sqrtabs",
)

SMOOTH_NAMED = frozenset({"linear", "square", "cube", "abscube"})

# The ten transforms used in the J=10 experiments, in their usual order.
TEN_NAMED = NAMED


def _guarded_log_abs(u: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(np.abs(u), LOG_EPS))


def _dlog(u: np.ndarray) -> np.ndarray:
    # derivative of log(max(|u|, eps)); flat inside the guard band
    out = np.zeros_like(u)
    mask = np.abs(u) >= LOG_EPS
    out[mask] = 1.0 / u[mask]
    return out


@dataclass(frozen=True)
class Transform:
    """One scalar transform: a named function or ``|u|^p exp(-t|u|)``."""

    name: str
    p: int | None = None
    t: float | None = None

    def __post_init__(self):
        if self.name == "powerexp":
            if self.p is None or self.t is None:
                raise DomainError("powerexp needs both p and t")
            if int(self.p) != self.p or self.p < 0:
                raise DomainError(f"powerexp p must be a non-negative integer, got {self.p}")
            if not 0.0 <= self.t <= 1.0:
                raise DomainError(f"powerexp t must lie in [0, 1], got {self.t}")
            object.__setattr__(self, "p", int(self.p))
            object.__setattr__(self, "t", float(self.t))
        elif self.name not in NAMED:
            raise DomainError(f"unknown transform {self.name!r}")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        n = self.name
        if n == "linear":
            return u.copy()
        if n == "square":
            return u * u
        if n == "cube":
            return u**3
        if n == "sign":
            return np.sign(u)
        if n == "abs":
            return np.abs(u)
        if n == "abscube":
            return np.abs(u) ** 3
        if n == "logabs":
            return _guarded_log_abs(u)
        if n == "logabssq":
            return _guarded_log_abs(u) ** 2
        if n == "logabscube":
            return _guarded_log_abs(u) ** 3
        if n == "sqrtabs":
            return np.sqrt(np.abs(u))
        a = np.abs(u)
        return a**self.p * np.exp(-self.t * a)

    @property
    def smooth(self) -> bool:
        """Continuously differentiable, so sample Jacobians are meaningful."""
        if self.name == "powerexp":
            return self.p >= 2 or (self.p == 0 and self.t == 0.0)
        return self.name in SMOOTH_NAMED

    def derivative(self, u: np.ndarray) -> np.ndarray:
        """Pointwise derivative (zero where the transform is flat or non-differentiable)."""
        u = np.asarray(u, dtype=float)
        n = self.name
        if n == "linear":
            return np.ones_like(u)
        if n == "square":
            return 2.0 * u
        if n == "cube":
            return 3.0 * u * u
        if n == "sign":
            return np.zeros_like(u)
        if n == "abs":
            return np.sign(u)
        if n == "abscube":
            return 3.0 * u * np.abs(u)
        if n == "logabs":
            return _dlog(u)
        if n == "logabssq":
            return 2.0 * _guarded_log_abs(u) * _dlog(u)
        if n == "logabscube":
            return 3.0 * _guarded_log_abs(u) ** 2 * _dlog(u)
        if n == "sqrtabs":
            return 0.5 * np.sign(u) / np.sqrt(np.maximum(np.abs(u), LOG_EPS))
        a = np.abs(u)
        e = np.exp(-self.t * a)
        if self.p == 0:
            return -self.t * np.sign(u) * e
        return np.sign(u) * (self.p * a ** (self.p - 1) - self.t * a**self.p) * e

    def to_json(self):
        if self.name == "powerexp":
            return {"powerexp": {"p": self.p, "t": self.t}}
        return self.name

    @classmethod
    def from_json(cls, item) -> "Transform":
        if isinstance(item, str):
            return cls(item.lower())
        if isinstance(item, dict) and len(item) == 1:
            (key, val), = item.items()
            if key.lower() == "powerexp" and isinstance(val, dict):
                return cls("powerexp", p=val.get("p"), t=val.get("t"))
        raise DomainError(f"cannot parse transform descriptor {item!r}")


class TransformSpec(tuple):
    """Immutable, non-empty ordered collection of :class:`Transform`."""

    def __new__(cls, items: Iterable):
        parsed = tuple(it if isinstance(it, Transform) else Transform.from_json(it) for it in items)
        if not parsed:
            raise DomainError("transform spec must not be empty")
        return super().__new__(cls, parsed)

    @property
    def J(self) -> int:
        return len(self)

    @property
    def smooth(self) -> bool:
        return all(t.smooth for t in self)

    def to_json(self) -> list:
        return [t.to_json() for t in self]

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "TransformSpec":
        return cls(json.loads(text))

    @classmethod
    def named(cls, names: Sequence[str]) -> "TransformSpec":
        return cls(Transform(n) for n in names)

    def __repr__(self):
        return f"TransformSpec({self.to_json()!r})"


@dataclass(frozen=True)
class TransformedSeries:
    """``(T, J*n)`` transformed series plus the ``J`` and ``n`` it came from."""

    values: np.ndarray
    source_j: int
    source_n: int

    @property
    def K(self) -> int:
        return self.source_j * self.source_n

    def block(self, j: int) -> np.ndarray:
        """Columns produced by transform ``j`` (0-based)."""
        n = self.source_n
        return self.values[:, j * n : (j + 1) * n]


def apply(residuals, spec: TransformSpec) -> TransformedSeries:
    """Transform every residual component with every transform in ``spec``."""
    u = as_series(residuals)
    if not np.all(np.isfinite(u)):
        raise DomainError("residuals contain non-finite values")
    spec = spec if isinstance(spec, TransformSpec) else TransformSpec(spec)
    T, n = u.shape
    values = np.empty((T, n * len(spec)))
    cache: dict = {}

    def shared(key, fn):
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    # abs and log|u| are reused by several transforms, so compute each once
    for j, a in enumerate(spec):
        out = values[:, j * n : (j + 1) * n]
        name = a.name
        if name == "linear":
            out[:] = u
        elif name == "square":
            np.multiply(u, u, out=out)
        elif name == "cube":
            out[:] = u * u * u
        elif name == "sign":
            np.sign(u, out=out)
        elif name == "abs":
            out[:] = shared("abs", lambda: np.abs(u))
        elif name == "abscube":
            ab = shared("abs", lambda: np.abs(u))
            out[:] = ab * ab * ab
        elif name in ("logabs", "logabssq", "logabscube"):
            lg = shared("log", lambda: np.log(np.maximum(shared("abs", lambda: np.abs(u)), LOG_EPS)))
            if name == "logabs":
                out[:] = lg
            elif name == "logabssq":
                out[:] = lg * lg
            else:
                out[:] = lg * lg * lg
        elif name == "sqrtabs":
            out[:] = np.sqrt(shared("abs", lambda: np.abs(u)))
        else:
            out[:] = a(u)
    return TransformedSeries(values, len(spec), n)


def apply_derivative(residuals, spec: TransformSpec) -> np.ndarray:
    """Pointwise derivatives ``a_j'(u_{i,t})`` in the same layout as :func:`apply`."""
    u = as_series(residuals)
    return np.concatenate([a.derivative(u) for a in spec], axis=1)


def dense_subsystem(n_points: int, p_max: int) -> TransformSpec:
    """Power-exponential transforms on an equally spaced grid ``t = j/n_points``.

    Powers ``0..p_max`` are crossed with ``j = 1..n_points``, power-major.
    """
    if n_points < 1:
        raise DomainError("n_points must be >= 1")
    if p_max < 0:
        raise DomainError("p_max must be >= 0")
    return TransformSpec(
        Transform("powerexp", p=p, t=j / n_points)
        for p in range(p_max + 1)
        for j in range(1, n_points + 1)
    )
