"""Transformer encoder-decoder conditioner.

The encoder stacks causally masked self-attention + feed-forward layers over
the projected observation sequence.  Because the embedding has no ground
truth target sequence, the decoder consumes the encoder output offset by one
position behind a learned start token, applies causal self-attention and
cross-attention over the full encoder output, and the final decoder token is
projected down to the embedding size.
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .common import LayerNorm, Linear, MultiHeadAttention, positional_encoding, tokens
from .config import EncoderConfig


class _EncoderLayer:
    def __init__(self, d: int, heads: int, ff: int, rng):
        self.attn = MultiHeadAttention(d, heads, rng)
        self.ln1 = LayerNorm(d)
        self.ff1 = Linear(d, ff, rng)
        self.ff2 = Linear(ff, d, rng)
        self.ln2 = LayerNorm(d)

    def parameters(self, prefix):
        out = {}
        out.update(self.attn.parameters(f"{prefix}.attn"))
        out.update(self.ln1.parameters(f"{prefix}.ln1"))
        out.update(self.ff1.parameters(f"{prefix}.ff1"))
        out.update(self.ff2.parameters(f"{prefix}.ff2"))
        out.update(self.ln2.parameters(f"{prefix}.ln2"))
        return out

    def __call__(self, x: Tensor) -> Tensor:
        x = self.ln1(dc.add(x, self.attn(x, x, x, causal=True)))
        f = tokens(self.ff2, dc.silu(tokens(self.ff1, x)))
        return self.ln2(dc.add(x, f))


class _DecoderLayer:
    def __init__(self, d: int, heads: int, ff: int, rng):
        self.self_attn = MultiHeadAttention(d, heads, rng)
        self.ln1 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ff1 = Linear(d, ff, rng)
        self.ff2 = Linear(ff, d, rng)
        self.ln3 = LayerNorm(d)

    def parameters(self, prefix):
        out = {}
        out.update(self.self_attn.parameters(f"{prefix}.self_attn"))
        out.update(self.ln1.parameters(f"{prefix}.ln1"))
        out.update(self.cross_attn.parameters(f"{prefix}.cross_attn"))
        out.update(self.ln2.parameters(f"{prefix}.ln2"))
        out.update(self.ff1.parameters(f"{prefix}.ff1"))
        out.update(self.ff2.parameters(f"{prefix}.ff2"))
        out.update(self.ln3.parameters(f"{prefix}.ln3"))
        return out

    def __call__(self, y: Tensor, memory: Tensor) -> Tensor:
        y = self.ln1(dc.add(y, self.self_attn(y, y, y, causal=True)))
        y = self.ln2(dc.add(y, self.cross_attn(y, memory, memory, causal=False)))
        f = tokens(self.ff2, dc.silu(tokens(self.ff1, y)))
        return self.ln3(dc.add(y, f))


class TransformerEncoder:
    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, heads, ff = config.model_dim, config.n_heads, config.ff_dim
        self.in_proj = Linear(config.input_dim, d, rng)
        self.enc_layers = [
            _EncoderLayer(d, heads, ff, rng) for _ in range(config.n_encoder_layers)
        ]
        self.dec_layers = [
            _DecoderLayer(d, heads, ff, rng) for _ in range(config.n_decoder_layers)
        ]
        self.start_token = Tensor(rng.uniform(-0.1, 0.1, (1, d)), requires_grad=True)
        self.out_proj = Linear(d, config.embed_dim, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.in_proj.parameters("encoder.in_proj"))
        for i, layer in enumerate(self.enc_layers):
            out.update(layer.parameters(f"encoder.enc{i}"))
        for i, layer in enumerate(self.dec_layers):
            out.update(layer.parameters(f"encoder.dec{i}"))
        out["encoder.start_token"] = self.start_token
        out.update(self.out_proj.parameters("encoder.out_proj"))
        return out

    def encode(self, obs) -> Tensor:
        """Encoder-side token states, [B, R, model_dim]."""
        if not isinstance(obs, Tensor):
            obs = Tensor(np.asarray(obs, dtype=np.float64))
        b, r, m = obs.shape
        if m != self.config.input_dim:
            raise dc.ShapeMismatchError(
                f"expected input_dim {self.config.input_dim}, got {m}"
            )
        x = tokens(self.in_proj, obs)
        x = dc.add(x, Tensor(positional_encoding(r, self.config.model_dim)))
        for layer in self.enc_layers:
            x = layer(x)
        return x

    def embed(self, obs) -> Tensor:
        memory = self.encode(obs)
        b, r, d = memory.shape
        start = dc.add(Tensor(np.zeros((b, 1, d))), self.start_token)
        if r > 1:
            y = dc.concat([start, dc.narrow(memory, 1, 0, r - 1)], axis=1)
        else:
            y = start
        y = dc.add(y, Tensor(positional_encoding(r, d)))
        for layer in self.dec_layers:
            y = layer(y, memory)
        last = dc.reshape(dc.narrow(y, 1, r - 1, 1), (b, d))
        return self.out_proj(last)
