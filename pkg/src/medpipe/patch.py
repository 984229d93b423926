"""Patch grids over (D, H, W), slab extraction and weighted reconstruction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidOverlap, ShapeError, UncoveredVoxel


def axis_starts(length: int, patch: int, overlap: int) -> list[int]:
    if patch <= 0:
        raise InvalidOverlap(f"patch size must be positive, got {patch}")
    if not 0 <= overlap < patch:
        raise InvalidOverlap(f"overlap {overlap} must be in [0, {patch})")
    if length <= patch:
        return [0]
    stride = patch - overlap
    starts = list(range(0, length - patch + 1, stride))
    if starts[-1] + patch < length:
        starts.append(length - patch)
    return starts


def _per_axis(value, n: int, what: str) -> tuple[int, ...]:
    if value is None:
        return (0,) * n
    if isinstance(value, (int, np.integer)):
        return (int(value),) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{what} has {len(value)} entries for {n} axes")
    return value


@dataclass(frozen=True)
class PatchGrid:
    shape: tuple[int, ...]
    patch_size: tuple[int, ...]
    overlap: tuple[int, ...]
    starts: tuple[tuple[int, ...], ...]
    padded_shape: tuple[int, ...]

    @property
    def positions(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*self.starts))

    def __len__(self) -> int:
        return int(np.prod([len(s) for s in self.starts]))

    def position(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < len(self):
            raise IndexError(f"patch index {index} out of range for {len(self)} patches")
        pos = []
        for starts in reversed(self.starts):
            index, r = divmod(index, len(starts))
            pos.append(starts[r])
        return tuple(reversed(pos))


def compute_grid(shape: Sequence[int], patch_size: Sequence[int], overlap=None) -> PatchGrid:
    """Start positions per axis; the last start is clamped to ``L - p``.

    ``overlap=None`` means no overlap.  Axes shorter than the patch get a
    single start and are padded up to the patch size.
    """
    shape = tuple(int(s) for s in shape)
    patch_size = _per_axis(patch_size, len(shape), "patch_size")
    overlap = _per_axis(overlap, len(shape), "overlap")
    starts = tuple(axis_starts(L, p, o) for L, p, o in zip(shape, patch_size, overlap))
    padded = tuple(max(L, p) for L, p in zip(shape, patch_size))
    return PatchGrid(shape, patch_size, overlap, starts, padded)


@dataclass(frozen=True)
class SlabSpec:
    """2.5D context: ``extend_slice`` neighbours on each side along ``axis`` (0=D, 1=H, 2=W)."""

    extend_slice: int
    axis: int

    @classmethod
    def from_patch(cls, patch_size: Sequence[int], extend_slice: int) -> "SlabSpec | None":
        if not extend_slice:
            return None
        unit = [a for a, p in enumerate(patch_size) if p == 1]
        if len(unit) != 1:
            raise ShapeError(f"extend_slice needs exactly one patch axis of extent 1, got {list(patch_size)}")
        return cls(int(extend_slice), unit[0])

    @property
    def width(self) -> int:
        return 2 * self.extend_slice + 1


def _crop(array: np.ndarray, start: Sequence[int], size: Sequence[int], pad_value: float) -> np.ndarray:
    """Crop (C, *spatial); voxels outside the array take ``pad_value``."""
    out = np.full((array.shape[0],) + tuple(size), pad_value, dtype=array.dtype)
    src, dst = [slice(None)], [slice(None)]
    for s, p, n in zip(start, size, array.shape[1:]):
        lo, hi = max(s, 0), min(s + p, n)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - s, hi - s))
    out[tuple(dst)] = array[tuple(src)]
    return out


def extract_patch(array: np.ndarray, grid: PatchGrid, index: int, slab: SlabSpec | None = None,
                  pad_value: float = 0.0) -> np.ndarray:
    """Patch of a (C, D, H, W) array; with a slab the result has C * (2e + 1) channels."""
    pos = grid.position(index)
    if slab is None:
        return _crop(array, pos, grid.patch_size, pad_value)
    pieces = []
    for offset in range(-slab.extend_slice, slab.extend_slice + 1):
        start = list(pos)
        start[slab.axis] += offset
        pieces.append(_crop(array, start, grid.patch_size, pad_value))
    return np.concatenate(pieces, axis=0)


def cosine_weights(patch_size: Sequence[int]) -> np.ndarray:
    """Separable Hann window sin^2(pi (i + 0.5) / p); unit axes get weight 1."""
    w = np.ones((), dtype=np.float64)
    for p in patch_size:
        axis = np.ones(1) if p == 1 else np.sin(np.pi * (np.arange(p) + 0.5) / p) ** 2
        w = np.multiply.outer(w, axis)
    return w


WEIGHTINGS = ("Uniform", "Cosine")


class Accumulator:
    """Running weighted sum of patch predictions over the padded volume."""

    def __init__(self, grid: PatchGrid, channels: int, weighting: str | None = "Uniform"):
        weighting = weighting or "Uniform"
        if weighting not in WEIGHTINGS:
            raise ValueError(f"patch_combine must be one of {WEIGHTINGS} or None, got {weighting!r}")
        self.grid = grid
        self.weighting = weighting
        # f64 buffers: a weighted mean of identical f32 values rounds back to that value
        self.sum = np.zeros((channels,) + grid.padded_shape, dtype=np.float64)
        self.weight = np.zeros(grid.padded_shape, dtype=np.float64)
        if weighting == "Cosine":
            self._w = cosine_weights(grid.patch_size)
        else:
            self._w = np.ones(grid.patch_size, dtype=np.float64)

    def accumulate(self, index: int, patch_pred: np.ndarray) -> None:
        patch_pred = np.asarray(patch_pred)
        if patch_pred.ndim != 1 + len(self.grid.patch_size) or patch_pred.shape[1:] != self.grid.patch_size \
                or patch_pred.shape[0] != self.sum.shape[0]:
            raise ShapeError(
                f"patch prediction {patch_pred.shape} does not match "
                f"({self.sum.shape[0]}, {', '.join(map(str, self.grid.patch_size))})"
            )
        pos = self.grid.position(index)
        region = tuple(slice(s, s + p) for s, p in zip(pos, self.grid.patch_size))
        self.sum[(slice(None),) + region] += self._w * patch_pred.astype(np.float64)
        self.weight[region] += self._w

    def finalize(self) -> np.ndarray:
        crop = tuple(slice(0, n) for n in self.grid.shape)
        weight = self.weight[crop]
        if np.any(weight <= 0):
            raise UncoveredVoxel("some voxels of the volume received no patch")
        return (self.sum[(slice(None),) + crop] / weight).astype(np.float32)


def accumulate(acc: Accumulator, grid: PatchGrid, index: int, patch_pred: np.ndarray) -> None:
    if grid is not acc.grid and grid != acc.grid:
        raise ShapeError("accumulator was built for a different grid")
    acc.accumulate(index, patch_pred)


def finalize(acc: Accumulator) -> np.ndarray:
    return acc.finalize()
