"""Sequence-to-vector conditioning operators: MLP, transformer, selective SSM."""

from .common import (
    LayerNorm,
    Linear,
    MultiHeadAttention,
    RmsNorm,
    attention_core,
    causal_mask,
    positional_encoding,
    tokens,
)
from .config import EncoderConfig, build_encoder
from .mlp import MlpEncoder, WindowLengthError
from .ssm import (
    NonFiniteStateError,
    SsmEncoder,
    causal_depthwise_conv,
    selective_scan,
    zoh_discretize,
)
from .transformer import TransformerEncoder

__all__ = [
    "EncoderConfig",
    "LayerNorm",
    "Linear",
    "MlpEncoder",
    "MultiHeadAttention",
    "NonFiniteStateError",
    "RmsNorm",
    "SsmEncoder",
    "TransformerEncoder",
    "WindowLengthError",
    "attention_core",
    "build_encoder",
    "causal_depthwise_conv",
    "causal_mask",
    "positional_encoding",
    "selective_scan",
    "tokens",
    "zoh_discretize",
]
