"""Minimal reverse-mode differentiation engine backing the models."""

from .gradcheck import grad_check
from .tensor import (
    DiffcoreError,
    DomainError,
    FullyMaskedRowError,
    InvalidAxisError,
    NonScalarLossError,
    ShapeMismatchError,
    Tape,
    Tensor,
    add,
    backward,
    bmm,
    clamp,
    concat,
    div,
    elementwise,
    exp,
    expm1x,
    log,
    matmul,
    mul,
    narrow,
    neg,
    reduce,
    reshape,
    scale,
    sigmoid,
    silu,
    softmax_masked,
    softplus,
    sqrt,
    sub,
    tanh,
    transpose,
)

__all__ = [
    "DiffcoreError",
    "DomainError",
    "FullyMaskedRowError",
    "InvalidAxisError",
    "NonScalarLossError",
    "ShapeMismatchError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "bmm",
    "clamp",
    "concat",
    "div",
    "elementwise",
    "exp",
    "expm1x",
    "grad_check",
    "log",
    "matmul",
    "mul",
    "narrow",
    "neg",
    "reduce",
    "reshape",
    "scale",
    "sigmoid",
    "silu",
    "softmax_masked",
    "softplus",
    "sqrt",
    "sub",
    "tanh",
    "transpose",
]
