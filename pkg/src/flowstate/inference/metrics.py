"""Scoring utilities: mean NLL (joint and per-dimension) and MAPE."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..diffcore import Tensor


class ZeroDenominatorError(ValueError):
    pass


def mape(predicted, actual) -> float:
    """100 * mean(|pred - actual| / |actual|); rejects near-zero denominators."""
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    bad = np.flatnonzero(np.abs(a) <= 1e-9)
    if bad.size:
        raise ZeroDenominatorError(f"actual ~ 0 at indices {bad[:10].tolist()}")
    return float(100.0 * np.mean(np.abs(p - a) / np.abs(a)))


def silverman_bandwidth(samples: np.ndarray) -> float:
    n = samples.shape[0]
    sd = samples.std()
    if sd == 0.0:
        sd = 1e-12
    return float(sd * (4.0 / (3.0 * n)) ** 0.2)


def kde_log_density(samples: np.ndarray, points: np.ndarray) -> np.ndarray:
    """1-D Gaussian KDE log-density with Silverman's bandwidth."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    points = np.atleast_1d(np.asarray(points, dtype=np.float64))
    h = silverman_bandwidth(samples)
    z = (points[:, None] - samples[None, :]) / h
    log_kernel = -0.5 * z * z - 0.5 * np.log(2.0 * np.pi) - np.log(h)
    return logsumexp(log_kernel, axis=1) - np.log(samples.size)


def per_dimension_nll(samples: np.ndarray, true_state: np.ndarray) -> np.ndarray:
    """-log of each 1-D KDE marginal of `samples` evaluated at the true state."""
    samples = np.asarray(samples, dtype=np.float64)
    true_state = np.asarray(true_state, dtype=np.float64).ravel()
    return np.array(
        [-kde_log_density(samples[:, j], true_state[j])[0] for j in range(samples.shape[1])]
    )


def mean_nll(flow, encoder, eval_pairs, log_std_correction: float = 0.0) -> float:
    """Mean of -log p(state | embed(context)) over (context, state) pairs.

    Inputs are in the flow's training coordinates; ``log_std_correction``
    (sum of log target stds) converts the density to raw units.
    """
    if len(eval_pairs) == 0:
        raise ValueError("empty evaluation set")
    values = []
    for context, state in eval_pairs:
        ctx = None
        if context is not None:
            ctx = encoder.embed(Tensor(np.asarray(context)[None, :, :]))
        lp = flow.log_prob(np.asarray(state)[None, :], ctx).log_prob.data[0]
        values.append(-lp + log_std_correction)
    return float(np.mean(values))
