"""Shared neural building blocks for the sequence encoders."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor


class Linear:
    """Affine map for rank-2 inputs; scaled uniform fan-in init."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        s = 1.0 / np.sqrt(n_in)
        self.w = Tensor(rng.uniform(-s, s, (n_in, n_out)), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = dc.matmul(x, self.w)
        if self.b is not None:
            out = dc.add(out, self.b)
        return out

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.w": self.w}
        if self.b is not None:
            out[f"{prefix}.b"] = self.b
        return out


def tokens(linear: Linear, x3: Tensor) -> Tensor:
    """Apply a Linear across the token axis of a [B, R, D] tensor."""
    b, r, d = x3.shape
    flat = dc.reshape(x3, (b * r, d))
    out = linear(flat)
    return dc.reshape(out, (b, r, out.shape[1]))


class LayerNorm:
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = dc.sub(x, mu)
        var = dc.mul(centered, centered).mean(axis=-1, keepdims=True)
        inv = dc.div(Tensor(1.0), dc.sqrt(dc.add(var, Tensor(self.eps))))
        return dc.add(dc.mul(dc.mul(centered, inv), self.gamma), self.beta)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


class RmsNorm:
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        ms = dc.mul(x, x).mean(axis=-1, keepdims=True)
        inv = dc.div(Tensor(1.0), dc.sqrt(dc.add(ms, Tensor(self.eps))))
        return dc.mul(dc.mul(x, inv), self.gamma)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma}


def positional_encoding(seq_len: int, model_dim: int) -> np.ndarray:
    """Sinusoidal table: channel 2i is sin(p / 10000^(2i/D)), 2i+1 the cosine."""
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    pos = np.arange(seq_len)[:, None]
    i2 = np.arange(0, model_dim, 2)
    angle = pos / np.power(10000.0, i2 / model_dim)
    pe = np.zeros((seq_len, model_dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : pe[:, 1::2].shape[1]])
    return pe


def causal_mask(n_q: int, n_k: int) -> np.ndarray:
    """Boolean mask admitting key j for query i iff j does not lie in i's future."""
    offset = n_k - n_q
    return (np.arange(n_k)[None, :] <= np.arange(n_q)[:, None] + offset)


def attention_core(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention on [batch, tokens, head_dim] stacks."""
    nb, nq, hd = q.shape
    nk = k.shape[1]
    scores = dc.scale(dc.bmm(q, dc.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(hd))
    if mask is None:
        mask = np.ones((nq, nk), dtype=bool)
    flat = dc.reshape(scores, (nb * nq, nk))
    tiled = np.broadcast_to(mask[None, :, :], (nb, nq, nk)).reshape(nb * nq, nk)
    attn = dc.reshape(dc.softmax_masked(flat, tiled), (nb, nq, nk))
    return dc.bmm(attn, v)


class MultiHeadAttention:
    """Multi-head attention: per-head scaled dot product, concat, output proj."""

    def __init__(self, model_dim: int, n_heads: int, rng: np.random.Generator):
        if model_dim % n_heads != 0:
            raise ValueError(f"model_dim {model_dim} not divisible by n_heads {n_heads}")
        self.model_dim = model_dim
        self.n_heads = n_heads
        self.head_dim = model_dim // n_heads
        self.wq = Linear(model_dim, model_dim, rng)
        self.wk = Linear(model_dim, model_dim, rng)
        self.wv = Linear(model_dim, model_dim, rng)
        self.wo = Linear(model_dim, model_dim, rng)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, lin in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            out.update(lin.parameters(f"{prefix}.{name}"))
        return out

    def __call__(self, q3: Tensor, k3: Tensor, v3: Tensor, causal: bool) -> Tensor:
        b, nq, d = q3.shape
        nk = k3.shape[1]
        h, hd = self.n_heads, self.head_dim

        def split(x3: Tensor, n: int) -> Tensor:
            x = dc.reshape(x3, (b, n, h, hd))
            x = dc.transpose(x, (0, 2, 1, 3))
            return dc.reshape(x, (b * h, n, hd))

        q = split(tokens(self.wq, q3), nq)
        k = split(tokens(self.wk, k3), nk)
        v = split(tokens(self.wv, v3), nk)
        mask = causal_mask(nq, nk) if causal else None
        out = attention_core(q, k, v, mask)
        out = dc.reshape(out, (b, h, nq, hd))
        out = dc.transpose(out, (0, 2, 1, 3))
        out = dc.reshape(out, (b, nq, d))
        return tokens(self.wo, out)
