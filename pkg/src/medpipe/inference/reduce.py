"""Element-wise reductions used over TTA views and over ensemble members."""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from ..errors import EmptyReduction, ShapeError
from ..tensor import Tensor


def _stack(arrays: Sequence) -> tuple[np.ndarray, np.dtype]:
    if len(arrays) == 0:
        raise EmptyReduction("nothing to reduce")
    data = [np.asarray(a.data if isinstance(a, Tensor) else a) for a in arrays]
    shape = data[0].shape
    for a in data[1:]:
        if a.shape != shape:
            raise ShapeError(f"cannot reduce arrays of shapes {shape} and {a.shape}")
    dtype = np.result_type(*data)
    if dtype.kind != "f":
        dtype = np.dtype(np.float64)
    return np.stack(data).astype(np.float64, copy=False), dtype


class Reduction:
    def __call__(self, arrays: Sequence) -> np.ndarray:
        raise NotImplementedError


class Mean(Reduction):
    """Shifted by the first array, so the mean of identical arrays is that array exactly."""

    def __call__(self, arrays):
        stack, dtype = _stack(arrays)
        base = stack[0]
        return (base + (stack - base).sum(axis=0) / stack.shape[0]).astype(dtype)


class Median(Reduction):
    """Even counts average the two middle values."""

    def __call__(self, arrays):
        stack, dtype = _stack(arrays)
        return np.median(stack, axis=0).astype(dtype)


class WeightedMean(Reduction):
    """Sum of w_i * a_i divided by the sum of the weights."""

    def __init__(self, weights: list[float]):
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError(f"weights must be non-negative with a positive sum, got {weights}")
        self.weights = [float(w) for w in weights]

    def __call__(self, arrays):
        stack, dtype = _stack(arrays)
        if stack.shape[0] != len(self.weights):
            raise ShapeError(f"{len(self.weights)} weights for {stack.shape[0]} arrays")
        w = np.asarray(self.weights, dtype=np.float64).reshape((-1,) + (1,) * (stack.ndim - 1))
        return ((w * stack).sum(axis=0) / sum(self.weights)).astype(dtype)


BUILTIN_REDUCTIONS = {"Mean": Mean, "Median": Median}

ReductionLike = Union[str, Reduction, Callable[[Sequence], np.ndarray]]


def _resolve(kind: ReductionLike) -> Callable:
    if isinstance(kind, str):
        if kind not in BUILTIN_REDUCTIONS:
            raise ValueError(f"unknown reduction '{kind}'")
        return BUILTIN_REDUCTIONS[kind]()
    return kind


def reduce(tensors: Sequence, kind: ReductionLike = "Mean"):
    """Reduce equally shaped arrays (or Tensors) element-wise.

    The result has the type of the inputs: a Tensor for Tensors, otherwise
    an ndarray.
    """
    out = _resolve(kind)(list(tensors))
    if tensors and isinstance(tensors[0], Tensor):
        return Tensor(out)
    return out


def combine_models(per_model: Sequence, kind: ReductionLike = "Mean"):
    """Cross-model aggregation; applied after the TTA reduction of each model."""
    return reduce(per_model, kind)
