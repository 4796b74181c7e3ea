"""Anisotropy estimation and isotropy testing for stationary Gaussian random fields."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AnisoError,
    ConvergenceError,
    DegenerateInputError,
    EmptyLevelSetError,
    LKCRefusal,
    PreconditionError,
)
from .field_sim import FieldGrid, SimConfig, model_truth, simulate  # noqa: E402

__all__ = [
    "AnisoError", "ConvergenceError", "DegenerateInputError", "EmptyLevelSetError", "LKCRefusal",
    "PreconditionError", "FieldGrid", "SimConfig", "model_truth", "simulate", "__version__",
]
