"""Planar vehicle with a random switching parameter.

Position and heading integrate forward with per-step Gaussian perturbations
of the velocity and angular-acceleration controls (the perturbations act on
the step, they are not folded back into the stored controls, so the
pre-switch bundle stays coherent).  The switch value psi is drawn once per
trajectory and only drives the angular-acceleration update from
``switch_time`` onward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory, TrajectorySet


@dataclass
class VehicleParams:
    c1: float = 0.1
    c2: float = 0.5
    sigma_v: float = 0.01
    sigma_phi: float = 0.025
    dt: float = 0.1
    switch_time: float = 5.5
    psi: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.psi <= 1.0:
            raise ValueError(f"psi={self.psi} outside [-1, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class VehicleState:
    p_x: float
    p_y: float
    theta: float
    phi: float
    v: float
    t: float = 0.0


def vehicle_step(s: VehicleState, p: VehicleParams, noise: tuple[float, float] = (0.0, 0.0)) -> VehicleState:
    """One Euler update of position/heading, then the switch-driven phi update."""
    eps_v, eps_phi = noise
    v_eff = s.v + eps_v
    phi_eff = s.phi + eps_phi
    p_x = s.p_x + p.dt * v_eff * math.cos(s.theta)
    p_y = s.p_y + p.dt * v_eff * math.sin(s.theta)
    theta = s.theta + p.dt * v_eff * phi_eff
    psi_eff = p.psi if s.t >= p.switch_time - 1e-12 else 0.0
    phi = s.phi + p.dt * psi_eff * p.c1 * math.cos(p.c2 * s.t)
    return VehicleState(p_x, p_y, theta, phi, s.v, s.t + p.dt)


STATE_COLUMNS = ("px", "py", "theta", "phi", "v")


def _simulate_arrays(
    n_steps: int,
    p: VehicleParams,
    psi: np.ndarray,
    eps: np.ndarray,
    v_schedule: np.ndarray,
) -> np.ndarray:
    """Vectorized rollout across trajectories; returns [n_traj, n_steps, 5]."""
    n_traj = psi.shape[0]
    out = np.zeros((n_traj, n_steps, 5))
    px = np.zeros(n_traj)
    py = np.zeros(n_traj)
    theta = np.zeros(n_traj)
    phi = np.zeros(n_traj)
    for k in range(n_steps):
        v = v_schedule[k]
        out[:, k, 0] = px
        out[:, k, 1] = py
        out[:, k, 2] = theta
        out[:, k, 3] = phi
        out[:, k, 4] = v
        if k == n_steps - 1:
            break
        t = k * p.dt
        v_eff = v + eps[:, k, 0]
        phi_eff = phi + eps[:, k, 1]
        px = px + p.dt * v_eff * np.cos(theta)
        py = py + p.dt * v_eff * np.sin(theta)
        theta = theta + p.dt * v_eff * phi_eff
        psi_eff = psi if t >= p.switch_time - 1e-12 else np.zeros(n_traj)
        phi = phi + p.dt * psi_eff * p.c1 * math.cos(p.c2 * t)
    return out


def vehicle_simulate(
    n_steps: int,
    p: VehicleParams,
    seed: int,
    n_traj: int = 1,
    v_schedule: np.ndarray | float | None = None,
    psi_override: float | None = None,
) -> TrajectorySet:
    """Simulate noisy vehicle trajectories plus their noise-free nominals.

    Each trajectory owns an independent random stream derived from
    (seed, index); psi is that stream's first draw.  A trajectory holds
    ``n_steps`` records at t = 0, dt, ..., (n_steps-1) dt.  Observations are
    the realized (noisy) positions; states are the full realized
    (px, py, theta, phi, v) record.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if v_schedule is None:
        v_schedule = np.ones(n_steps)
    elif np.isscalar(v_schedule):
        v_schedule = np.full(n_steps, float(v_schedule))
    else:
        v_schedule = np.asarray(v_schedule, dtype=np.float64)
        if v_schedule.shape != (n_steps,):
            raise ValueError("v_schedule must have one entry per step")

    children = np.random.SeedSequence(seed).spawn(n_traj)
    psi = np.empty(n_traj)
    eps = np.empty((n_traj, max(n_steps - 1, 1), 2))
    for i, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        psi[i] = rng.uniform(-1.0, 1.0)
        eps[i] = rng.normal(0.0, 1.0, eps.shape[1:])
    eps[:, :, 0] *= p.sigma_v
    eps[:, :, 1] *= p.sigma_phi
    if psi_override is not None:
        psi[:] = psi_override

    noisy = _simulate_arrays(n_steps, p, psi, eps, v_schedule)
    nominal = _simulate_arrays(n_steps, p, psi, np.zeros_like(eps), v_schedule)

    t = np.arange(n_steps) * p.dt
    trajectories = [
        Trajectory(
            system="vehicle",
            t=t.copy(),
            obs=noisy[i, :, :2].copy(),
            states=noisy[i].copy(),
            traj_id=i,
            params={"psi": float(psi[i])},
            nominal=nominal[i].copy(),
        )
        for i in range(n_traj)
    ]
    meta = {
        "system": "vehicle",
        "seed": seed,
        "n_traj": n_traj,
        "n_steps": n_steps,
        "dt": p.dt,
        "params": {
            "c1": p.c1,
            "c2": p.c2,
            "sigma_v": p.sigma_v,
            "sigma_phi": p.sigma_phi,
            "switch_time": p.switch_time,
        },
        "obs_columns": ["obs_px", "obs_py"],
        "state_columns": list(STATE_COLUMNS),
    }
    return TrajectorySet(trajectories, meta)


def vehicle_continuations(
    state: VehicleState,
    p: VehicleParams,
    n_steps: int,
    n_samples: int,
    seed: int,
    draw_psi: bool = True,
) -> np.ndarray:
    """Monte-Carlo continuations from an exact state; returns positions [n, 2].

    Used as the ground-truth distribution at a trajectory location: fresh
    process noise per sample, and (when the start precedes or sits at the
    switch) a fresh psi draw per sample.
    """
    rng = np.random.default_rng(seed)
    psi = rng.uniform(-1.0, 1.0, n_samples) if draw_psi else np.full(n_samples, p.psi)
    eps = rng.normal(0.0, 1.0, (n_samples, n_steps, 2))
    eps[:, :, 0] *= p.sigma_v
    eps[:, :, 1] *= p.sigma_phi

    px = np.full(n_samples, state.p_x)
    py = np.full(n_samples, state.p_y)
    theta = np.full(n_samples, state.theta)
    phi = np.full(n_samples, state.phi)
    t = state.t
    for k in range(n_steps):
        v_eff = state.v + eps[:, k, 0]
        phi_eff = phi + eps[:, k, 1]
        px = px + p.dt * v_eff * np.cos(theta)
        py = py + p.dt * v_eff * np.sin(theta)
        theta = theta + p.dt * v_eff * phi_eff
        psi_eff = psi if t >= p.switch_time - 1e-12 else 0.0
        phi = phi + p.dt * psi_eff * p.c1 * math.cos(p.c2 * t)
        t += p.dt
    return np.stack([px, py], axis=1)
