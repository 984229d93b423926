"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ShapeError


@dataclass
class OptimizerState:
    lr: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    """Config-facing optimizer description; ``state()`` builds the mutable part."""

    def __init__(self, lr: float = 0.001, betas: list[float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if len(betas) != 2 or not all(0 <= b < 1 for b in betas):
            raise ValueError("betas must be two values in [0, 1)")
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)

    def state(self) -> OptimizerState:
        return OptimizerState(lr=self.lr, betas=self.betas, eps=self.eps, weight_decay=self.weight_decay)


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One AdamW update; returns fresh parameter arrays and the advanced state.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
    """
    beta1, beta2 = state.betas
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    updated = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"adamw_step: gradient for '{name}' has shape {g.shape}, parameter {theta.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / c1
        v_hat = v / c2
        updated[name] = (
            theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps) - state.lr * state.weight_decay * theta
        ).astype(theta.dtype, copy=False)
    return updated, state

