"""Training: kinetic-regularized likelihood objective, Adam, seeded loop."""

from .loop import ArrayDataset, TrainConfig, TrainLog, train
from .losses import LossWeights, NonFiniteLossError, kinetic_term, nll_term, prior_term, total_loss
from .optimizer import AdamConfig, AdamState, adam_step, clip_gradients

__all__ = [
    "AdamConfig",
    "AdamState",
    "ArrayDataset",
    "LossWeights",
    "NonFiniteLossError",
    "TrainConfig",
    "TrainLog",
    "adam_step",
    "clip_gradients",
    "kinetic_term",
    "nll_term",
    "prior_term",
    "total_loss",
    "train",
]
