"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-4,
    n_samples: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a deterministic closure over ``params`` returning a scalar
    Tensor.  Relative error is |analytic - fd| / max(1, |fd|), maximized
    over all parameter entries (or a seeded random subset of ``n_samples``
    entries).  Zero parameters return 0 by convention.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"h={h} outside [1e-6, 1e-3]")
    params = list(params)
    if not params or all(p.size == 0 for p in params):
        return 0.0

    for p in params:
        p.grad = None
    with Tape():
        out = f()
        backward(out, params=params)

    entries = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if n_samples is not None and n_samples < len(entries):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(entries), size=n_samples, replace=False)
        entries = [entries[k] for k in sorted(pick)]

    worst = 0.0
    for i, j in entries:
        p = params[i]
        orig = p.data.flat[j]
        p.data.flat[j] = orig + h
        y_plus = float(f().data)
        p.data.flat[j] = orig - h
        y_minus = float(f().data)
        p.data.flat[j] = orig
        fd = (y_plus - y_minus) / (2.0 * h)
        analytic = float(p.grad.flat[j])
        err = abs(analytic - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
