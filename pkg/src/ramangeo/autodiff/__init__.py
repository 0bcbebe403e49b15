"""Minimal dense tensors with reverse-mode autodiff."""

from . import functional
from .tensor import (
    ComputationRecord,
    ContractError,
    DimensionError,
    EmptyAxisError,
    NonFiniteError,
    Tensor,
    as_tensor,
    backward,
    debug_enabled,
    set_debug,
)

__all__ = [
    "ComputationRecord",
    "ContractError",
    "DimensionError",
    "EmptyAxisError",
    "NonFiniteError",
    "Tensor",
    "as_tensor",
    "backward",
    "debug_enabled",
    "functional",
    "set_debug",
]
