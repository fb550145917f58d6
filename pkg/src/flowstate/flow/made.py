"""Masked conditioner producing per-dimension shift and log-scale.

Standard MADE masking with 0-based degrees: input i carries degree i, hidden
units cycle through degrees 0..d-2, and the output block for dimension k
connects only to hidden units of degree < k.  Dimension 0 therefore receives
bias and context terms only, which is the usual convention; permutations
between layers give every dimension a conditioned transform somewhere in the
stack.  The context vector enters unmasked at both layers.
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor


def made_masks(dim: int, hidden: int) -> tuple[np.ndarray, np.ndarray]:
    """Input->hidden and hidden->output masks for a single hidden layer."""
    in_deg = np.arange(dim)
    if dim >= 2:
        hid_deg = np.arange(hidden) % (dim - 1)
    else:
        hid_deg = np.zeros(hidden, dtype=int)
    out_deg = np.concatenate([np.arange(dim), np.arange(dim)])  # (shift, log-scale)
    m1 = (in_deg[:, None] <= hid_deg[None, :]).astype(np.float64)
    m2 = (hid_deg[:, None] < out_deg[None, :]).astype(np.float64)
    return m1, m2


class MadeConditioner:
    def __init__(self, dim: int, hidden: int, context_dim: int, rng: np.random.Generator):
        self.dim = dim
        self.hidden = hidden
        self.context_dim = context_dim
        self.m1, self.m2 = made_masks(dim, hidden)
        s1 = 1.0 / np.sqrt(max(dim + context_dim, 1))
        self.w1 = Tensor(rng.uniform(-s1, s1, (dim, hidden)), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        # Output layer starts at zero so the transform is the identity.
        self.w2 = Tensor(np.zeros((hidden, 2 * dim)), requires_grad=True)
        self.b2 = Tensor(np.zeros(2 * dim), requires_grad=True)
        if context_dim > 0:
            self.w1c = Tensor(rng.uniform(-s1, s1, (context_dim, hidden)), requires_grad=True)
            self.w2c = Tensor(np.zeros((context_dim, 2 * dim)), requires_grad=True)
        else:
            self.w1c = None
            self.w2c = None

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
        }
        if self.w1c is not None:
            out[f"{prefix}.w1c"] = self.w1c
            out[f"{prefix}.w2c"] = self.w2c
        return out

    def outputs_t(self, x: Tensor, context: Tensor | None) -> tuple[Tensor, Tensor]:
        """Tape path: (shift, log_scale), each [B, dim]."""
        h = dc.matmul(x, dc.mul(self.w1, Tensor(self.m1)))
        if context is not None:
            h = dc.add(h, dc.matmul(context, self.w1c))
        h = dc.tanh(dc.add(h, self.b1))
        out = dc.matmul(h, dc.mul(self.w2, Tensor(self.m2)))
        if context is not None:
            out = dc.add(out, dc.matmul(context, self.w2c))
        out = dc.add(out, self.b2)
        shift = dc.narrow(out, 1, 0, self.dim)
        log_scale = dc.narrow(out, 1, self.dim, self.dim)
        return shift, log_scale

    def outputs_np(self, x: np.ndarray, context: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        """Numpy mirror of :meth:`outputs_t`, used by the sequential inverse."""
        h = x @ (self.w1.data * self.m1)
        if context is not None:
            h = h + context @ self.w1c.data
        h = np.tanh(h + self.b1.data)
        out = h @ (self.w2.data * self.m2)
        if context is not None:
            out = out + context @ self.w2c.data
        out = out + self.b2.data
        return out[:, : self.dim], out[:, self.dim :]
