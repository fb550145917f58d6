"""Windowed (context, target) training pairs for forward and backward estimation.

Contexts and targets are z-score-normalized with constants computed over the
source trajectory set; context noise is added in those normalized units on
top of whatever observation noise the simulator already applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajectory import Normalization, TrajectorySet


class TrajectoryTooShortError(ValueError):
    pass


@dataclass
class WindowedDataset:
    contexts: np.ndarray            # [N, R, m], normalized (+ context noise)
    targets: np.ndarray             # [N, d], normalized
    direction: str                  # "forward" | "backward"
    R: int
    horizon: int
    include_params: bool
    context_noise_sigma: float
    norm: Normalization
    target_dims: tuple[int, ...]
    traj_index: np.ndarray          # [N] source trajectory
    anchor: np.ndarray              # [N] step index of the last context row
    target_step: np.ndarray         # [N] step index of the target
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.contexts.shape[2]

    @property
    def target_dim(self) -> int:
        return self.targets.shape[1]

    def window_config(self) -> dict:
        return {
            "direction": self.direction,
            "R": self.R,
            "horizon": self.horizon,
            "include_params": self.include_params,
            "context_noise_sigma": self.context_noise_sigma,
            "target_dims": list(self.target_dims),
        }


def make_windows(
    ts: TrajectorySet,
    R: int,
    direction: str = "forward",
    horizon: int = 1,
    include_params: bool = False,
    context_noise_sigma: float = 0.0,
    seed: int = 0,
    target_dims: tuple[int, ...] | None = None,
) -> WindowedDataset:
    """Slice every trajectory into R-row contexts with offset targets.

    Forward windows pair (o_n .. o_{n+R-1}) with the state at
    n+R-1+horizon.  Backward windows store rows in reversed time order,
    (o_n, o_{n-1}, .., o_{n-R+1}), and target the state at n-R+1-horizon.
    Each trajectory yields len - R - horizon + 1 windows.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    if R < 1 or horizon < 1:
        raise ValueError("R and horizon must be >= 1")
    if include_params and any(
        tr.params is None or "beta" not in tr.params for tr in ts.trajectories
    ):
        raise ValueError("include_params requires (beta, gamma)-tagged trajectories")

    if target_dims is None:
        target_dims = tuple(range(ts.trajectories[0].states.shape[1]))
    target_dims = tuple(int(i) for i in target_dims)

    norm = Normalization.compute(ts, target_dims, include_params)

    ctx_blocks, tgt_blocks = [], []
    traj_idx, anchors, target_steps = [], [], []
    for ti, tr in enumerate(ts.trajectories):
        T = len(tr)
        n_windows = T - R - horizon + 1
        if n_windows < 1:
            raise TrajectoryTooShortError(
                f"trajectory {tr.traj_id}: length {T} yields no windows "
                f"for R={R}, horizon={horizon}"
            )
        obs_n = norm.normalize_obs(tr.obs)
        sliding = np.lib.stride_tricks.sliding_window_view(obs_n, R, axis=0)
        sliding = sliding.transpose(0, 2, 1)  # [T-R+1, R, m]
        if direction == "forward":
            ctx = sliding[:n_windows]
            last = np.arange(n_windows) + R - 1
            tgt_step = last + horizon
        else:
            ctx = sliding[horizon:][:, ::-1, :]
            first_in_time = np.arange(n_windows) + horizon
            last = first_in_time  # last stored row is the earliest in time
            tgt_step = first_in_time - horizon
        states = tr.states[:, list(target_dims)]
        tgt = states[tgt_step]
        if include_params:
            pv = np.array([tr.params["beta"], tr.params["gamma"]])
            tgt = np.concatenate([tgt, np.tile(pv, (n_windows, 1))], axis=1)
        ctx_blocks.append(np.ascontiguousarray(ctx))
        tgt_blocks.append(tgt)
        traj_idx.append(np.full(n_windows, ti))
        anchors.append(last)
        target_steps.append(tgt_step)

    contexts = np.concatenate(ctx_blocks, axis=0)
    targets_raw = np.concatenate(tgt_blocks, axis=0)
    targets = norm.normalize_target(targets_raw)
    if context_noise_sigma > 0:
        rng = np.random.default_rng(seed)
        contexts = contexts + rng.normal(0.0, context_noise_sigma, contexts.shape)

    return WindowedDataset(
        contexts=contexts,
        targets=targets,
        direction=direction,
        R=R,
        horizon=horizon,
        include_params=include_params,
        context_noise_sigma=context_noise_sigma,
        norm=norm,
        target_dims=target_dims,
        traj_index=np.concatenate(traj_idx),
        anchor=np.concatenate(anchors),
        target_step=np.concatenate(target_steps),
        meta={"source": dict(ts.meta), "seed": seed},
    )
