from __future__ import annotations

from . import ops
from .gradcheck import GradientReport, check_gradients, numerical_gradient
from .registry import ParameterRegistry
from .tensor import DEFAULT_DTYPE, Tape, TapeRecord, Tensor, active_tape, backward

__all__ = [
    "DEFAULT_DTYPE",
    "GradientReport",
    "ParameterRegistry",
    "Tape",
    "TapeRecord",
    "Tensor",
    "active_tape",
    "backward",
    "check_gradients",
    "numerical_gradient",
    "ops",
]
