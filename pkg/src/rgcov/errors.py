"""Exception hierarchy.

Every exception carries the CLI exit code it maps to, so the command layer
can translate failures without a lookup table.
"""

from __future__ import annotations


class RGCovError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class DomainError(RGCovError, ValueError):
    """Argument outside the domain of an operation (bad shape, negative delta, ...)."""

    exit_code = 1


class ConfigurationError(DomainError):
    """Inconsistent estimator, test or study configuration."""


class DataError(RGCovError, ValueError):
    """Input data unusable: non-finite values, missing columns, non-positive prices."""

    exit_code = 2


class NumericalError(RGCovError, ArithmeticError):
    exit_code = 3


class NearSingularError(NumericalError):
    """Weight matrix too ill-conditioned to invert reliably.

    Attributes
    ----------
    min_eigenvalue : float
        Smallest eigenvalue of the offending matrix.
    condition : float
        Its condition number (``inf`` when the smallest eigenvalue is <= 0).
    """

    def __init__(self, message: str, min_eigenvalue: float, condition: float = float("inf")):
        super().__init__(message)
        self.min_eigenvalue = float(min_eigenvalue)
        self.condition = float(condition)


class UnitRootError(NumericalError):
    """Companion matrix has an eigenvalue on (or numerically at) the unit circle."""

    def __init__(self, message: str, moduli=None):
        super().__init__(message)
        self.moduli = moduli


class NotDiagonalizableError(NumericalError):
    pass


class EstimationError(NumericalError):
    """Every optimizer start failed."""
