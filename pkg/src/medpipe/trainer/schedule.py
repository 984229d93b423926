"""Learning-rate plateau schedule, early stopping and parameter EMA."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np


@dataclass
class LRSchedulerState:
    lr: float
    factor: float = 0.1
    patience: int = 10
    threshold: float = 1e-4
    best: float = math.inf
    count: int = 0


class ReduceLROnPlateau:
    """Config-facing description; ``state(lr)`` creates the mutable part."""

    schedule_kind = "lr"

    def __init__(self, factor: float = 0.1, patience: int = 10, threshold: float = 0.0001):
        if not 0 < factor < 1:
            raise ValueError(f"factor must lie in (0, 1), got {factor}")
        if patience < 0 or threshold < 0:
            raise ValueError("patience and threshold must be non-negative")
        self.factor = float(factor)
        self.patience = int(patience)
        self.threshold = float(threshold)

    def state(self, lr: float) -> LRSchedulerState:
        return LRSchedulerState(lr=lr, factor=self.factor, patience=self.patience, threshold=self.threshold)


def plateau_step(state: LRSchedulerState, metric: float) -> float:
    """Improvement means ``metric < best - threshold`` (strict).  After more than
    ``patience`` non-improving calls the lr is multiplied by ``factor``."""
    if metric < state.best - state.threshold:
        state.best = metric
        state.count = 0
    else:
        state.count += 1
        if state.count > state.patience:
            state.lr *= state.factor
            state.count = 0
    return state.lr


@dataclass
class EarlyStoppingState:
    monitor: str | None = None
    patience: int = 10
    min_delta: float = 0.0
    mode: str = "min"
    best: float | None = None
    stale: int = 0

    def improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        if self.mode == "max":
            return metric > self.best + self.min_delta
        return metric < self.best - self.min_delta


def early_stopping_check(state: EarlyStoppingState, metric: float) -> bool:
    """Returns True once more than ``patience`` consecutive checks brought no improvement."""
    if state.improved(metric):
        state.best = metric
        state.stale = 0
    else:
        state.stale += 1
    return state.stale > state.patience


def ema_update(ema_params: Mapping[str, np.ndarray], params: Mapping[str, np.ndarray], d: float) -> dict[str, np.ndarray]:
    """e <- d * e + (1 - d) * theta, kept in each parameter's dtype."""
    if not 0 <= d < 1:
        raise ValueError(f"EMA decay must lie in [0, 1), got {d}")
    return {
        name: (d * ema_params[name] + (1.0 - d) * theta).astype(theta.dtype, copy=False)
        for name, theta in params.items()
    }
