"""SIR compartment model integrated with classical fourth-order Runge-Kutta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory, TrajectorySet


class InitialConditionError(ValueError):
    pass


@dataclass
class SirParams:
    beta: float = 0.03
    gamma: float = 0.01
    noise_sigma: float = 0.001
    dt: float = 1.0

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class SirState:
    S: float
    I: float
    R: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.I, self.R])


def _rhs(y: np.ndarray, beta, gamma) -> np.ndarray:
    """dS = -beta I S, dI = beta I S - gamma I, dR = gamma I (sums to 0)."""
    s, i = y[..., 0], y[..., 1]
    flow_si = beta * i * s
    flow_ir = gamma * i
    return np.stack([-flow_si, flow_si - flow_ir, flow_ir], axis=-1)


def sir_rhs(s: SirState, p: SirParams) -> tuple[float, float, float]:
    d = _rhs(s.as_array(), p.beta, p.gamma)
    return float(d[0]), float(d[1]), float(d[2])


def _rk4(y: np.ndarray, dt: float, beta, gamma) -> np.ndarray:
    k1 = _rhs(y, beta, gamma)
    k2 = _rhs(y + 0.5 * dt * k1, beta, gamma)
    k3 = _rhs(y + 0.5 * dt * k2, beta, gamma)
    k4 = _rhs(y + dt * k3, beta, gamma)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(s: SirState, p: SirParams, dt: float | None = None) -> SirState:
    dt = p.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = _rk4(s.as_array(), dt, p.beta, p.gamma)
    return SirState(float(y[0]), float(y[1]), float(y[2]), s.t + dt)


def _integrate(initial: SirState, n_steps: int, dt: float, beta, gamma) -> np.ndarray:
    out = np.empty((n_steps, 3))
    y = initial.as_array()
    out[0] = y
    for k in range(1, n_steps):
        y = _rk4(y, dt, beta, gamma)
        out[k] = y
    return out


def _check_initial(initial: SirState) -> None:
    total = initial.S + initial.I + initial.R
    if abs(total - 1.0) > 1e-9:
        raise InitialConditionError(f"S+I+R = {total!r}, expected 1 within 1e-9")


def _meta(system, seed, n_traj, n_steps, dt, noise_sigma, extra=None):
    meta = {
        "system": system,
        "seed": seed,
        "n_traj": n_traj,
        "n_steps": n_steps,
        "dt": dt,
        "noise_sigma": noise_sigma,
        "obs_columns": ["obs_S", "obs_I", "obs_R"],
        "state_columns": ["S", "I", "R"],
    }
    if extra:
        meta.update(extra)
    return meta


def sir_simulate(p: SirParams, initial: SirState, n_steps: int, seed: int) -> TrajectorySet:
    """Nominal RK4 trajectory plus a noisy observation copy.

    States hold the nominal solution; observations add i.i.d. Gaussian noise
    with std ``p.noise_sigma`` per component per step.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    _check_initial(initial)
    nominal = _integrate(initial, n_steps, p.dt, p.beta, p.gamma)
    rng = np.random.default_rng(seed)
    obs = nominal + rng.normal(0.0, 1.0, nominal.shape) * p.noise_sigma
    t = initial.t + np.arange(n_steps) * p.dt
    tr = Trajectory(
        system="sir",
        t=t,
        obs=obs,
        states=nominal,
        traj_id=0,
        params={"beta": p.beta, "gamma": p.gamma},
        nominal=nominal,
    )
    meta = _meta("sir", seed, 1, n_steps, p.dt, p.noise_sigma,
                 {"beta": p.beta, "gamma": p.gamma})
    return TrajectorySet([tr], meta)


def sir_ensemble(
    beta_range: tuple[float, float],
    gamma_range: tuple[float, float],
    n_traj: int,
    initial: SirState,
    n_steps: int,
    seed: int,
    noise_sigma: float = 0.001,
    dt: float = 1.0,
) -> TrajectorySet:
    """Independent noisy trajectories with (beta, gamma) drawn uniformly.

    Each trajectory derives its stream from (seed, index) and is tagged with
    the exact rates used for integration.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if beta_range[0] > beta_range[1] or gamma_range[0] > gamma_range[1]:
        raise ValueError("ranges must be (lo, hi) with lo <= hi")
    _check_initial(initial)
    children = np.random.SeedSequence(seed).spawn(n_traj)
    trajectories = []
    t = initial.t + np.arange(n_steps) * dt
    for i, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        beta = rng.uniform(*beta_range)
        gamma = rng.uniform(*gamma_range)
        nominal = _integrate(initial, n_steps, dt, beta, gamma)
        obs = nominal + rng.normal(0.0, 1.0, nominal.shape) * noise_sigma
        trajectories.append(
            Trajectory(
                system="sir",
                t=t.copy(),
                obs=obs,
                states=nominal,
                traj_id=i,
                params={"beta": float(beta), "gamma": float(gamma)},
                nominal=nominal,
            )
        )
    meta = _meta(
        "sir", seed, n_traj, n_steps, dt, noise_sigma,
        {"beta_range": list(beta_range), "gamma_range": list(gamma_range)},
    )
    return TrajectorySet(trajectories, meta)
