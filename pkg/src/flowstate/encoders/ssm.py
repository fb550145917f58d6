"""Selective state-space conditioner (single Mamba-style block).

The recurrence h_t = Abar_t h_{t-1} + Bbar_t x_t, y_t = C_t h_t runs
sequentially over the window (R is small, so the convolutional-form
evaluation buys nothing here).  A is diagonal with negative-real log-spaced
initialization; the per-token step sizes, input and output maps come from
selection projections of the post-convolution activations, which is what
breaks time invariance.
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .common import Linear, RmsNorm, tokens
from .config import EncoderConfig


class NonFiniteStateError(RuntimeError):
    pass


def zoh_discretize(a: Tensor, b: Tensor, delta: Tensor) -> tuple[Tensor, Tensor]:
    """Zero-order hold: Abar = exp(delta a), Bbar = (e^u - 1)/u * delta * b.

    ``u = delta * a``; the (e^u - 1)/u factor is evaluated with a series
    branch near 0 so the A -> 0 limit Bbar -> delta * b is exact.  Operands
    broadcast, so diagonal state matrices discretize elementwise.
    """
    if not np.all(delta.data > 0):
        raise ValueError("delta must be positive")
    u = dc.mul(delta, a)
    a_bar = dc.exp(u)
    b_bar = dc.mul(dc.expm1x(u), dc.mul(delta, b))
    return a_bar, b_bar


def selective_scan(x: Tensor, a_bar: Tensor, b_bar: Tensor, c_sel: Tensor) -> Tensor:
    """Run the selective recurrence.

    Shapes: x [B, R, C]; a_bar, b_bar [B, R, C, N]; c_sel [B, R, N].
    Returns y [B, R, C] with h_0 = 0; causal by construction.
    """
    bsz, r, c = x.shape
    n = a_bar.shape[3]
    h = Tensor(np.zeros((bsz, c, n)))
    ys = []
    for t in range(r):
        at = dc.reshape(dc.narrow(a_bar, 1, t, 1), (bsz, c, n))
        bt = dc.reshape(dc.narrow(b_bar, 1, t, 1), (bsz, c, n))
        xt = dc.reshape(dc.narrow(x, 1, t, 1), (bsz, c, 1))
        h = dc.add(dc.mul(at, h), dc.mul(bt, xt))
        ct = dc.reshape(dc.narrow(c_sel, 1, t, 1), (bsz, 1, n))
        yt = dc.mul(h, ct).sum(axis=2)
        ys.append(dc.reshape(yt, (bsz, 1, c)))
    if not np.all(np.isfinite(h.data)):
        raise NonFiniteStateError("scan state overflowed")
    return dc.concat(ys, axis=1) if len(ys) > 1 else ys[0]


def causal_depthwise_conv(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Depthwise convolution over the token axis with left zero padding."""
    bsz, r, c = x.shape
    k = weight.shape[0]
    padded = dc.concat([Tensor(np.zeros((bsz, k - 1, c))), x], axis=1) if k > 1 else x
    out = None
    for j in range(k):
        term = dc.mul(dc.narrow(padded, 1, j, r), dc.narrow(weight, 0, j, 1))
        out = term if out is None else dc.add(out, term)
    return dc.add(out, bias)


class SsmEncoder:
    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.model_dim
        inner = config.expansion * d
        n = config.ssm_state_dim
        k = config.conv_kernel_width
        self.inner = inner

        self.in_proj = Linear(config.input_dim, d, rng)
        self.main_proj = Linear(d, inner, rng)
        self.gate_proj = Linear(d, inner, rng)
        s = 1.0 / np.sqrt(k)
        self.conv_w = Tensor(rng.uniform(-s, s, (k, inner)), requires_grad=True)
        self.conv_b = Tensor(np.zeros(inner), requires_grad=True)
        self.delta_proj = Linear(inner, inner, rng)
        # softplus(bias) spans log-spaced step sizes in [1e-3, 1e-1]
        dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), inner))
        self.delta_proj.b.data = np.log(np.expm1(dt))
        self.b_proj = Linear(inner, n, rng, bias=False)
        self.c_proj = Linear(inner, n, rng, bias=False)
        mags = np.logspace(0.0, np.log10(n), n)  # |A| log-spaced over 1..N
        self.a_log = Tensor(np.tile(np.log(mags), (inner, 1)), requires_grad=True)
        self.out_proj = Linear(inner, d, rng)
        self.norm = RmsNorm(d)
        self.head = Linear(d, config.embed_dim, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.in_proj.parameters("encoder.in_proj"))
        out.update(self.main_proj.parameters("encoder.main_proj"))
        out.update(self.gate_proj.parameters("encoder.gate_proj"))
        out["encoder.conv_w"] = self.conv_w
        out["encoder.conv_b"] = self.conv_b
        out.update(self.delta_proj.parameters("encoder.delta_proj"))
        out.update(self.b_proj.parameters("encoder.b_proj"))
        out.update(self.c_proj.parameters("encoder.c_proj"))
        out["encoder.a_log"] = self.a_log
        out.update(self.out_proj.parameters("encoder.out_proj"))
        out.update(self.norm.parameters("encoder.norm"))
        out.update(self.head.parameters("encoder.head"))
        return out

    def token_states(self, obs) -> Tensor:
        """Normalized per-token block output, [B, R, model_dim]; causal."""
        if not isinstance(obs, Tensor):
            obs = Tensor(np.asarray(obs, dtype=np.float64))
        b, r, m = obs.shape
        if m != self.config.input_dim:
            raise dc.ShapeMismatchError(
                f"expected input_dim {self.config.input_dim}, got {m}"
            )
        x0 = tokens(self.in_proj, obs)
        a = dc.silu(causal_depthwise_conv(tokens(self.main_proj, x0), self.conv_w, self.conv_b))
        gate = dc.silu(tokens(self.gate_proj, x0))

        delta = dc.softplus(tokens(self.delta_proj, a))            # [B,R,C]
        b_sel = tokens(self.b_proj, a)                             # [B,R,N]
        c_sel = tokens(self.c_proj, a)                             # [B,R,N]
        a_diag = dc.neg(dc.exp(self.a_log))                        # [C,N]

        n = self.config.ssm_state_dim
        delta4 = dc.reshape(delta, (b, r, self.inner, 1))
        b4 = dc.reshape(b_sel, (b, r, 1, n))
        a_bar, b_bar = zoh_discretize(a_diag, b4, delta4)
        y = selective_scan(a, a_bar, b_bar, c_sel)
        y = dc.mul(y, gate)
        y = tokens(self.out_proj, y)
        return self.norm(dc.add(y, x0))

    def embed(self, obs) -> Tensor:
        states = self.token_states(obs)
        b, r, d = states.shape
        last = dc.reshape(dc.narrow(states, 1, r - 1, 1), (b, d))
        return self.head(last)
