"""Conditional masked autoregressive normalizing flow."""

from .layers import AffineAutoregressive, FlowLayer, LuLinear, Permutation
from .made import MadeConditioner, made_masks
from .model import (
    LOG_SIGMA_CLAMP,
    BaseHead,
    DensityValue,
    FlowConfig,
    FlowModel,
    NonFiniteOutputError,
    perturb_parameters,
)

__all__ = [
    "AffineAutoregressive",
    "BaseHead",
    "DensityValue",
    "FlowConfig",
    "FlowLayer",
    "FlowModel",
    "LOG_SIGMA_CLAMP",
    "LuLinear",
    "MadeConditioner",
    "NonFiniteOutputError",
    "Permutation",
    "made_masks",
    "perturb_parameters",
]
