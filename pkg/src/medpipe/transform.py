"""Preprocessing transforms with recorded inversion state, and flip augmentation.

A transform is called as ``step(volume, state)``; when ``state`` is given the
step appends whatever it needs to be undone later by
:func:`invert_transforms`.  Integer-typed volumes are treated as label maps:
they are resampled with nearest neighbour and intensity steps are not
inverted on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dataio.volume import Volume
from .errors import DegenerateRange, InvalidDim, MissingState


@dataclass
class StepRecord:
    kind: str
    data: dict[str, Any] = field(default_factory=dict)


@dataclass
class TransformState:
    """Per-case, per-group log of applied steps in application order."""

    records: list[StepRecord] = field(default_factory=list)

    def add(self, kind: str, **data) -> None:
        self.records.append(StepRecord(kind, data))

    def last(self, kind: str) -> StepRecord | None:
        for rec in reversed(self.records):
            if rec.kind == kind:
                return rec
        return None


def is_label(array: np.ndarray) -> bool:
    return array.dtype.kind in "iub"


class Transform:
    """Base class for registry-visible transforms."""

    def __call__(self, volume: Volume, state: TransformState | None = None) -> Volume:
        raise NotImplementedError

    def invert(self, volume: Volume, record: StepRecord) -> Volume:
        return volume


class Clip(Transform):
    def __init__(self, min_value: float, max_value: float, save_clip_min: bool = False,
                 save_clip_max: bool = False):
        if not min_value < max_value:
            raise ValueError(f"Clip needs min_value < max_value, got [{min_value}, {max_value}]")
        self.min_value = min_value
        self.max_value = max_value
        # recorded only; they do not change forward values
        self.save_clip_min = save_clip_min
        self.save_clip_max = save_clip_max

    def __call__(self, volume, state=None):
        arr = volume.array
        lo, hi = self.min_value, self.max_value
        if arr.dtype.kind in "iu":
            info = np.iinfo(arr.dtype)
            lo, hi = max(math.ceil(lo), info.min), min(math.floor(hi), info.max)
        out = np.clip(arr, lo, hi).astype(arr.dtype, copy=False)
        if state is not None:
            state.add("Clip", min_value=self.min_value, max_value=self.max_value,
                      save_clip_min=self.save_clip_min, save_clip_max=self.save_clip_max)
        return volume.with_array(out)


class Normalize(Transform):
    """Affine map of a source range onto [min_value, max_value].

    With ``lazy`` the source range is the sample's own (min, max); otherwise
    the bounds of a preceding Clip are used when one was recorded.
    """

    def __init__(self, lazy: bool = True, channels: list[int] | None = None, min_value: float = -1.0,
                 max_value: float = 1.0):
        if not min_value < max_value:
            raise ValueError(f"Normalize needs min_value < max_value, got [{min_value}, {max_value}]")
        self.lazy = lazy
        self.channels = None if channels is None else list(channels)
        self.min_value = float(min_value)
        self.max_value = float(max_value)

    def __call__(self, volume, state=None):
        arr = volume.array
        chans = list(range(arr.shape[0])) if self.channels is None else self.channels
        for c in chans:
            if not 0 <= c < arr.shape[0]:
                raise InvalidDim(f"Normalize channel {c} out of range for {arr.shape[0]} channels")
        sel = arr[chans].astype(np.float64)
        clip = state.last("Clip") if (state is not None and not self.lazy) else None
        if clip is not None:
            lo, hi = float(clip.data["min_value"]), float(clip.data["max_value"])
        else:
            lo, hi = float(sel.min()), float(sel.max())
        if lo == hi:
            raise DegenerateRange(f"Normalize: source range is a single value ({lo})")
        out_dtype = np.float64 if arr.dtype == np.float64 else np.float32
        out = arr.astype(out_dtype)
        out[chans] = ((sel - lo) / (hi - lo) * (self.max_value - self.min_value) + self.min_value).astype(out_dtype)
        if state is not None:
            state.add("Normalize", lo=lo, hi=hi, min_value=self.min_value, max_value=self.max_value,
                      channels=chans)
        return volume.with_array(out)

    def invert(self, volume, record):
        if is_label(volume.array):
            return volume
        d = record.data
        chans = [c for c in d["channels"] if c < volume.channels]
        out = volume.array.astype(np.float64 if volume.dtype == np.float64 else np.float32)
        sel = out[chans].astype(np.float64)
        out[chans] = ((sel - d["min_value"]) / (d["max_value"] - d["min_value"]) * (d["hi"] - d["lo"]) + d["lo"])
        return volume.with_array(out)


def _axis_coords(n_out: int, step: float, n_in: int) -> np.ndarray:
    return np.minimum(np.arange(n_out, dtype=np.float64) * step, n_in - 1)


def resample_array(array: np.ndarray, src_spacing, dst_spacing, out_shape, nearest: bool) -> np.ndarray:
    """Resample (C, D, H, W) so voxel 0 stays anchored; edges are clamped.

    Linear interpolation is separable, written as a0 + w * (a1 - a0) so
    constant fields come back bit-exact.
    """
    out = array
    for axis, (s_in, s_out, n_out) in enumerate(zip(src_spacing, dst_spacing, out_shape), start=1):
        n_in = out.shape[axis]
        if n_in == n_out and s_in == s_out:
            continue
        coords = _axis_coords(n_out, s_out / s_in, n_in)
        if nearest:
            idx = np.clip(np.floor(coords + 0.5).astype(np.int64), 0, n_in - 1)
            out = np.take(out, idx, axis=axis)
            continue
        i0 = np.floor(coords).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        shape = [1] * out.ndim
        shape[axis] = n_out
        w = (coords - i0).reshape(shape)
        a0 = np.take(out, i0, axis=axis).astype(np.float64)
        a1 = np.take(out, i1, axis=axis).astype(np.float64)
        out = a0 + w * (a1 - a0)
    if not nearest:
        out = out.astype(array.dtype if array.dtype.kind == "f" else np.float32, copy=False)
    return np.ascontiguousarray(out)


class ResampleToResolution(Transform):
    def __init__(self, spacing: list[float]):
        if any(s <= 0 for s in spacing):
            raise ValueError(f"ResampleToResolution spacing must be positive, got {spacing}")
        self.spacing = [float(s) for s in spacing]

    def target_spacing(self, volume: Volume) -> tuple[float, ...]:
        if len(self.spacing) < volume.ndims:
            raise ValueError(f"need {volume.ndims} spacing values, got {self.spacing}")
        return tuple(self.spacing[: volume.ndims])

    def __call__(self, volume, state=None):
        target = self.target_spacing(volume)
        src_axis = volume.axis_spacing()
        dst_axis = (1.0,) * (3 - len(target)) + tuple(reversed(target))
        shape = tuple(
            max(1, math.floor(n * s / t + 0.5)) for n, s, t in zip(volume.spatial_shape, src_axis, dst_axis)
        )
        out = resample_array(volume.array, src_axis, dst_axis, shape, nearest=is_label(volume.array))
        if state is not None:
            state.add("ResampleToResolution", shape=tuple(volume.spatial_shape), spacing=volume.spacing,
                      origin=volume.origin)
        return volume.with_array(out, spacing=target)

    def invert(self, volume, record):
        d = record.data
        orig_spacing = tuple(d["spacing"])
        dst_axis = (1.0,) * (3 - len(orig_spacing)) + tuple(reversed(orig_spacing))
        out = resample_array(volume.array, volume.axis_spacing(), dst_axis, tuple(d["shape"]),
                             nearest=is_label(volume.array))
        return volume.with_array(out, spacing=orig_spacing, origin=tuple(d["origin"]))


class TensorCast(Transform):
    """Saturating cast; float to integer rounds to nearest first."""

    def __init__(self, dtype: str):
        self.dtype = np.dtype(dtype)

    def __call__(self, volume, state=None):
        arr = volume.array
        if self.dtype.kind in "iu" and arr.dtype != self.dtype:
            info = np.iinfo(self.dtype)
            src = np.rint(arr) if arr.dtype.kind == "f" else arr
            arr = np.clip(src, info.min, info.max)
        out = arr.astype(self.dtype)
        if state is not None:
            state.add("TensorCast", dtype=str(volume.dtype))
        return volume.with_array(out)


class Argmax(Transform):
    """Index of the maximum along ``dim`` of the (C, D, H, W) array, kept as a size-1 axis."""

    def __init__(self, dim: int = 0):
        self.dim = dim

    def __call__(self, volume, state=None):
        if not -4 <= self.dim < 4:
            raise InvalidDim(f"Argmax dim {self.dim} out of range for a 4-d volume")
        out = np.argmax(volume.array, axis=self.dim)
        out = np.expand_dims(out, self.dim).astype(np.int64)
        if state is not None:
            state.add("Argmax", dim=self.dim)
        return volume.with_array(out)


_BUILTIN_TRANSFORMS = {
    "Clip": Clip,
    "Normalize": Normalize,
    "ResampleToResolution": ResampleToResolution,
    "TensorCast": TensorCast,
    "Argmax": Argmax,
}


def apply_transform(step: Transform, volume: Volume, state: TransformState | None = None) -> Volume:
    return step(volume, state)


def apply_transforms(steps, volume: Volume, state: TransformState | None = None) -> Volume:
    for step in steps:
        volume = step(volume, state)
    return volume


def invert_transforms(state: TransformState | None, volume: Volume, steps: dict[str, Transform] | None = None) -> Volume:
    """Undo recorded steps in reverse order.

    Clip, TensorCast and Argmax are not invertible and are skipped.
    ``steps`` maps record kinds to the objects that can invert them; the
    built-in classes are used otherwise.
    """
    if state is None:
        raise MissingState("no transform state recorded for this case")
    for rec in reversed(state.records):
        handler = (steps or {}).get(rec.kind)
        if handler is None:
            cls = _BUILTIN_TRANSFORMS.get(rec.kind)
            if cls is None or cls.invert is Transform.invert:
                continue
            handler = cls.__new__(cls)
        volume = handler.invert(volume, rec)
    return volume


# ---------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentationRecord:
    kind: str
    flipped_axes: tuple[bool, ...]
    seed: int | None = None

    @property
    def is_identity(self) -> bool:
        return not any(self.flipped_axes)


IDENTITY_FLIP = AugmentationRecord("Flip", (False, False, False))


class Augmentation:
    def draw(self, rng: np.random.Generator, seed: int | None = None) -> AugmentationRecord:
        raise NotImplementedError

    def apply(self, volume: Volume, record: AugmentationRecord) -> Volume:
        raise NotImplementedError

    def invert(self, volume: Volume, record: AugmentationRecord) -> Volume:
        raise NotImplementedError


def flip_array(array: np.ndarray, record: AugmentationRecord) -> np.ndarray:
    axes = tuple(i + array.ndim - len(record.flipped_axes) for i, f in enumerate(record.flipped_axes) if f)
    return np.ascontiguousarray(np.flip(array, axis=axes)) if axes else array


class Flip(Augmentation):
    """Triggers with probability ``prob``; then each spatial axis (D, H, W) flips with ``f_prob[a]``."""

    def __init__(self, f_prob: list[float], prob: float = 1.0):
        if not 0 <= prob <= 1 or any(not 0 <= p <= 1 for p in f_prob):
            raise ValueError("Flip probabilities must lie in [0, 1]")
        self.prob = float(prob)
        self.f_prob = [float(p) for p in f_prob]

    def draw(self, rng, seed=None):
        trigger = rng.random() < self.prob
        flips = tuple(bool(rng.random() < p) for p in self.f_prob)
        return AugmentationRecord("Flip", flips if trigger else (False,) * len(flips), seed)

    def apply(self, volume, record):
        return volume.with_array(flip_array(volume.array, record))

    invert = apply
