"""Training: the TRAIN loop, schedules, EMA and checkpoints."""

from .checkpoint import (
    CheckpointWriter,
    decode_checkpoint,
    encode_checkpoint,
    inference_parameters,
    latest_checkpoint,
    load_checkpoint,
)
from .loop import Trainer, train
from .schedule import (
    EarlyStoppingState,
    LRSchedulerState,
    ReduceLROnPlateau,
    early_stopping_check,
    ema_update,
    plateau_step,
)

__all__ = [
    "CheckpointWriter",
    "EarlyStoppingState",
    "LRSchedulerState",
    "ReduceLROnPlateau",
    "Trainer",
    "decode_checkpoint",
    "early_stopping_check",
    "ema_update",
    "encode_checkpoint",
    "inference_parameters",
    "latest_checkpoint",
    "load_checkpoint",
    "plateau_step",
    "train",
]
