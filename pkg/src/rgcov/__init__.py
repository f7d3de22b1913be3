"""Regularised generalized covariance estimation for mixed causal-noncausal VAR models."""

from .errors import (
    ConfigurationError,
    DataError,
    DomainError,
    EstimationError,
    NearSingularError,
    NotDiagonalizableError,
    NumericalError,
    RGCovError,
    UnitRootError,
)
from .estimator import EstimationResult, EstimatorConfig, ShrinkageRegime, estimate, objective
from .transforms import Transform, TransformSpec, apply
from .var import NoiseSpec, VarModel, classify, decompose, simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "DomainError",
    "EstimationError",
    "EstimationResult",
    "EstimatorConfig",
    "NearSingularError",
    "NoiseSpec",
    "NotDiagonalizableError",
    "NumericalError",
    "RGCovError",
    "ShrinkageRegime",
    "Transform",
    "TransformSpec",
    "UnitRootError",
    "VarModel",
    "apply",
    "classify",
    "decompose",
    "estimate",
    "objective",
    "simulate",
]
