"""Feed-forward baseline conditioner over a flattened fixed-length window."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .common import Linear
from .config import EncoderConfig


class WindowLengthError(ValueError):
    pass


class MlpEncoder:
    """Flatten R observations, two SiLU hidden layers, linear head."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        flat = config.window_length * config.input_dim
        self.l1 = Linear(flat, config.mlp_hidden, rng)
        self.l2 = Linear(config.mlp_hidden, config.mlp_hidden, rng)
        self.head = Linear(config.mlp_hidden, config.embed_dim, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.l1.parameters("encoder.l1"))
        out.update(self.l2.parameters("encoder.l2"))
        out.update(self.head.parameters("encoder.head"))
        return out

    def embed(self, obs) -> Tensor:
        if not isinstance(obs, Tensor):
            obs = Tensor(np.asarray(obs, dtype=np.float64))
        b, r, m = obs.shape
        if r != self.config.window_length or m != self.config.input_dim:
            raise WindowLengthError(
                f"configured for R={self.config.window_length}, m={self.config.input_dim}; "
                f"got window {r} x {m}"
            )
        x = dc.reshape(obs, (b, r * m))
        x = dc.silu(self.l1(x))
        x = dc.silu(self.l2(x))
        return self.head(x)
