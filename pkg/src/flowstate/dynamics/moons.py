"""The classic two-moons point set used for unconditional density estimation."""

from __future__ import annotations

import numpy as np

UPPER_CENTER = np.array([0.0, 0.0])
LOWER_CENTER = np.array([1.0, 0.5])


def two_moons(n: int, noise_sigma: float = 0.1, seed: int = 0) -> np.ndarray:
    """Two interleaving unit-radius half-circle arcs with Gaussian jitter.

    Upper arc: upper half of the unit circle at the origin.  Lower arc:
    lower half of the unit circle at (1, 0.5), i.e. the upper arc reflected
    and shifted right/down in the conventional construction.  The first
    ceil(n/2) rows belong to the upper moon.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    n_upper = (n + 1) // 2
    n_lower = n // 2
    rng = np.random.default_rng(seed)
    t_up = rng.uniform(0.0, np.pi, n_upper)
    t_lo = rng.uniform(0.0, np.pi, n_lower)
    upper = np.stack([np.cos(t_up), np.sin(t_up)], axis=1)
    lower = np.stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)], axis=1)
    pts = np.concatenate([upper, lower], axis=0)
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    return pts


def arc_distances(points: np.ndarray) -> np.ndarray:
    """Distance from each point to each arc; returns [n, 2] (upper, lower)."""
    d = np.empty((points.shape[0], 2))
    d[:, 0] = _half_circle_distance(points, UPPER_CENTER, upper_half=True)
    d[:, 1] = _half_circle_distance(points, LOWER_CENTER, upper_half=False)
    return d


def _half_circle_distance(points, center, upper_half: bool) -> np.ndarray:
    rel = points - center
    r = np.linalg.norm(rel, axis=1)
    on_half = rel[:, 1] >= 0 if upper_half else rel[:, 1] <= 0
    ring = np.abs(r - 1.0)
    # Off the supported half, the closest arc points are the endpoints (+-1, 0).
    ends = np.minimum(
        np.linalg.norm(rel - np.array([1.0, 0.0]), axis=1),
        np.linalg.norm(rel - np.array([-1.0, 0.0]), axis=1),
    )
    return np.where(on_half, ring, ends)
