"""Momentum SGD, the cosine schedule, the epoch loop and checkpoint files."""

from sitswin.config import TrainConfig
from sitswin.train.optim import SGD, VELOCITY_PREFIX, cosine_lr, sgd_momentum_step
from sitswin.train.checkpoint import (
    Checkpoint,
    checkpoint_bytes,
    checkpoint_from_bytes,
    load_checkpoint,
    save_checkpoint,
)
from sitswin.train.fit import EpochRecord, FitResult, fit, steps_per_epoch

__all__ = [
    "TrainConfig",
    "SGD",
    "VELOCITY_PREFIX",
    "cosine_lr",
    "sgd_momentum_step",
    "Checkpoint",
    "checkpoint_bytes",
    "checkpoint_from_bytes",
    "load_checkpoint",
    "save_checkpoint",
    "EpochRecord",
    "FitResult",
    "fit",
    "steps_per_epoch",
]
