"""Configuration shared by the three conditioning encoders."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class EncoderConfig:
    kind: str                      # "mlp" | "transformer" | "ssm"
    input_dim: int
    embed_dim: int = 4
    model_dim: int = 32
    n_encoder_layers: int = 4
    n_decoder_layers: int = 4
    n_heads: int = 2
    ff_dim: int = 64
    ssm_state_dim: int = 8
    conv_kernel_width: int = 4
    expansion: int = 2
    mlp_hidden: int = 64
    window_length: int = 5         # only enforced by the MLP encoder
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mlp", "transformer", "ssm"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.model_dim % self.n_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by n_heads {self.n_heads}"
            )
        for name in ("input_dim", "embed_dim", "model_dim", "n_heads", "ssm_state_dim",
                     "conv_kernel_width", "expansion", "mlp_hidden", "window_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


def build_encoder(config: EncoderConfig):
    from .mlp import MlpEncoder
    from .ssm import SsmEncoder
    from .transformer import TransformerEncoder

    if config.kind == "mlp":
        return MlpEncoder(config)
    if config.kind == "transformer":
        return TransformerEncoder(config)
    return SsmEncoder(config)
