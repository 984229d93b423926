"""Losses and tracking metrics that can be bound to any model output.

A criterion is called as ``criterion(output, *targets)`` where ``output``
is the tensor at the bound address and ``targets`` are the target group
tensors, in the order they were listed (``CT;MASK``).
"""

from __future__ import annotations

import numpy as np

from ..errors import LabelOutOfRange, ShapeError
from ..tensor import Tensor, ops


class Criterion:
    differentiable = True

    def __call__(self, output: Tensor, *targets: Tensor) -> Tensor:
        raise NotImplementedError


class Loss(Criterion):
    """Base class for trainable objectives."""


class Metric(Criterion):
    """Base class for tracking-only measures."""

    differentiable = False


def labels_of(target: Tensor) -> np.ndarray:
    """Integer label map (N, ...) from a (N, 1, ...) target tensor."""
    lab = target.data
    if lab.ndim >= 2 and lab.shape[1] == 1:
        lab = lab[:, 0]
    if lab.dtype.kind == "f":
        rounded = np.rint(lab)
        if not np.array_equal(rounded, lab):
            raise LabelOutOfRange("target labels are not integer valued")
        lab = rounded
    return lab.astype(np.int64)


class MAE(Loss):
    def __call__(self, output, *targets):
        if not targets:
            raise ShapeError("MAE needs a target")
        return ops.mean(ops.abs(ops.sub(output, targets[0].data.astype(output.dtype))))


class FocalLoss(Loss):
    """Mean (or sum) over voxels of -alpha_c (1 - p_c)^gamma log p_c.

    ``output`` holds class probabilities (N, C, ...); ``alpha`` weights each
    class and may be omitted for uniform weighting.
    """

    def __init__(self, gamma: float = 2.0, alpha: list[float] | None = None, reduction: str = "mean"):
        if reduction not in ("mean", "sum"):
            raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
        self.gamma = float(gamma)
        self.alpha = None if alpha is None else [float(a) for a in alpha]
        self.reduction = reduction

    def __call__(self, output, *targets):
        labels = labels_of(targets[0])
        log_p = ops.gather_log_prob(output, labels)
        if self.gamma:
            modulator = ops.pow_scalar(ops.sub(1.0, ops.exp(log_p)), self.gamma)
            term = ops.mul(modulator, log_p)
        else:
            term = log_p
        if self.alpha is not None:
            nb_class = output.shape[1]
            if len(self.alpha) < nb_class:
                raise ShapeError(f"FocalLoss alpha has {len(self.alpha)} entries for {nb_class} classes")
            weights = np.asarray(self.alpha, dtype=output.dtype)[labels]
            term = ops.mul(term, weights)
        total = ops.sum(term) if self.reduction == "sum" else ops.mean(term)
        return ops.mul_scalar(total, -1.0)


class DiceLoss(Loss):
    """1 - soft Dice averaged over classes."""

    def __init__(self, smooth: float = 1.0):
        self.smooth = float(smooth)

    def __call__(self, output, *targets):
        labels = labels_of(targets[0])
        nb_class = output.shape[1]
        if labels.size and (labels.min() < 0 or labels.max() >= nb_class):
            raise LabelOutOfRange(f"labels must lie in [0, {nb_class})")
        onehot = np.moveaxis(np.eye(nb_class, dtype=output.dtype)[labels], -1, 1)
        axes = (0,) + tuple(range(2, output.ndim))
        inter = ops.sum(ops.mul(output, onehot), axis=axes)
        denom = ops.add_scalar(ops.add(ops.sum(output, axis=axes), onehot.sum(axis=axes)), self.smooth)
        dice = ops.div(ops.add_scalar(ops.mul_scalar(inter, 2.0), self.smooth), denom)
        return ops.sub(1.0, ops.mean(dice))


class Dice(Metric):
    """Hard Dice; class-probability outputs are reduced with argmax first."""

    def __init__(self, smooth: float = 1e-6):
        self.smooth = float(smooth)

    def __call__(self, output, *targets):
        from ..evaluator.metrics import dice

        pred = output.data
        if pred.ndim >= 2 and pred.shape[1] > 1 and pred.dtype.kind == "f":
            pred = np.argmax(pred, axis=1)
        elif pred.ndim >= 2 and pred.shape[1] == 1:
            pred = pred[:, 0]
        return Tensor(np.asarray(dice(pred, labels_of(targets[0]), self.smooth)))
