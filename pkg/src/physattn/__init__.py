"""Training-free temporal coherence priors for multi-frame feature sequences."""

from .core import (
    BaseConstants,
    ControlParams,
    DomainError,
    FeatureSequence,
    MaskSequence,
    NumericOverflowError,
    OperatorSchedule,
    PhysAttnError,
    RngHandle,
    ShapeError,
    derive_params,
    energy,
    validate_pair,
)
from .priors import PriorKind, PriorSpec, run_physics_operator, step_prior

__version__ = "0.1.0"

__all__ = [
    "BaseConstants",
    "ControlParams",
    "DomainError",
    "FeatureSequence",
    "MaskSequence",
    "NumericOverflowError",
    "OperatorSchedule",
    "PhysAttnError",
    "PriorKind",
    "PriorSpec",
    "RngHandle",
    "ShapeError",
    "derive_params",
    "energy",
    "run_physics_operator",
    "step_prior",
    "validate_pair",
]
