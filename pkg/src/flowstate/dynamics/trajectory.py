"""Containers for simulated and ingested trajectory data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """One time-indexed run: observations, states and an optional nominal."""

    system: str
    t: np.ndarray                      # [T]
    obs: np.ndarray                    # [T, m]
    states: np.ndarray                 # [T, s]
    traj_id: int = 0
    params: dict[str, float] | None = None
    nominal: np.ndarray | None = None  # noise-free reference states, [T, s]

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass
class TrajectorySet:
    """A group of trajectories from one generation run plus its metadata."""

    trajectories: list[Trajectory]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __getitem__(self, i: int) -> Trajectory:
        return self.trajectories[i]

    @property
    def system(self) -> str:
        return self.trajectories[0].system

    def n_records(self) -> int:
        return sum(len(tr) for tr in self.trajectories)


def _stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)  # constant dims stay unscaled
    return mean, std


@dataclass
class Normalization:
    """Per-dimension z-score constants for observations and targets."""

    obs_mean: np.ndarray
    obs_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def normalize_obs(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.obs_mean) / self.obs_std

    def denormalize_obs(self, obs: np.ndarray) -> np.ndarray:
        return obs * self.obs_std + self.obs_mean

    def normalize_target(self, x: np.ndarray) -> np.ndarray:
        return (x - self.target_mean) / self.target_std

    def denormalize_target(self, x: np.ndarray) -> np.ndarray:
        return x * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "obs_mean": self.obs_mean.tolist(),
            "obs_std": self.obs_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(
            obs_mean=np.asarray(d["obs_mean"], dtype=np.float64),
            obs_std=np.asarray(d["obs_std"], dtype=np.float64),
            target_mean=np.asarray(d["target_mean"], dtype=np.float64),
            target_std=np.asarray(d["target_std"], dtype=np.float64),
        )

    @classmethod
    def compute(cls, ts: TrajectorySet, target_dims, include_params: bool) -> "Normalization":
        obs = np.concatenate([tr.obs for tr in ts.trajectories], axis=0)
        states = np.concatenate(
            [tr.states[:, list(target_dims)] for tr in ts.trajectories], axis=0
        )
        obs_mean, obs_std = _stats(obs)
        t_mean, t_std = _stats(states)
        if include_params:
            pv = np.array(
                [[tr.params["beta"], tr.params["gamma"]] for tr in ts.trajectories]
            )
            p_mean, p_std = _stats(pv)
            t_mean = np.concatenate([t_mean, p_mean])
            t_std = np.concatenate([t_std, p_std])
        return cls(obs_mean, obs_std, t_mean, t_std)
