"""Dataset plumbing shared by training and prediction.

Turns the ``Dataset`` section into group definitions, preprocesses cases,
and cuts model-ready patches (2D, 2.5D slabs or 3D).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config.build import AugmentationBlock, build_augmentations, build_transforms
from .dataio import CaseLoader, DatasetFilenameSpec, Volume, index_dataset
from .errors import ShapeError
from .patch import PatchGrid, SlabSpec, compute_grid, extract_patch
from .transform import AugmentationRecord, TransformState, apply_transforms


@dataclass
class GroupDef:
    dest: str
    src: str
    transforms: list
    patch_transforms: list
    is_input: bool


@dataclass
class PatchConfig:
    patch_size: tuple[int, int, int] | None
    overlap: object = None
    extend_slice: int = 0
    pad_value: float = 0.0


@dataclass
class DatasetPlan:
    groups: list[GroupDef]
    patch: PatchConfig
    augmentations: list[AugmentationBlock] = field(default_factory=list)

    @property
    def inputs(self) -> list[str]:
        return [g.dest for g in self.groups if g.is_input]

    @property
    def sources(self) -> list[str]:
        return list(dict.fromkeys(g.src for g in self.groups))

    def group(self, dest: str) -> GroupDef:
        for g in self.groups:
            if g.dest == dest:
                return g
        raise KeyError(dest)


def dataset_plan(dataset: dict, registry=None) -> DatasetPlan:
    groups = []
    for src, spec in dataset["groups_src"].items():
        for dest, d in spec["groups_dest"].items():
            groups.append(GroupDef(
                dest=dest,
                src=src,
                transforms=build_transforms(d.get("transforms"), registry),
                patch_transforms=build_transforms(d.get("patch_transforms"), registry),
                is_input=bool(d.get("is_input", False)),
            ))
    p = dataset.get("Patch")
    if p is None:
        patch = PatchConfig(None)
    else:
        patch = PatchConfig(tuple(p["patch_size"]), p["overlap"], int(p["extend_slice"]), float(p["pad_value"]))
    return DatasetPlan(groups, patch, build_augmentations(dataset.get("augmentations"), registry))


def open_dataset(dataset: dict, root: Path, plan: DatasetPlan, shuffle: bool = False, seed: int | None = None,
                 cache: bool = False) -> CaseLoader:
    specs = [DatasetFilenameSpec.parse(s) for s in dataset["dataset_filenames"]]
    index = index_dataset(specs, plan.sources, subset=dataset.get("subset"), shuffle=shuffle, seed=seed, root=root)
    loader = CaseLoader(index, cache=cache)
    loader.preload()
    return loader


def preprocess_case(loader: CaseLoader, case: str, plan: DatasetPlan) -> tuple[dict[str, Volume], dict[str, TransformState]]:
    volumes, states = {}, {}
    for g in plan.groups:
        state = TransformState()
        volumes[g.dest] = apply_transforms(g.transforms, loader.load(case, g.src), state)
        states[g.dest] = state
    return volumes, states


def stream_seed(*parts: int | str) -> int:
    """Stable 63-bit seed derived from a tuple of keys (independent of hash randomization)."""
    text = "/".join(str(p) for p in parts).encode()
    return (zlib.crc32(text) << 31) ^ zlib.adler32(text)


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(stream_seed(*parts))


def draw_view(blocks: list[AugmentationBlock], block_index: int, rng: np.random.Generator) -> list:
    """[(augmentation, record)] for one copy of one augmentation block."""
    return [(aug, aug.draw(rng)) for aug in blocks[block_index].augmentations]


def augment(volume: Volume, view: list) -> Volume:
    for aug, record in view:
        volume = aug.apply(volume, record)
    return volume


def deaugment(volume: Volume, view: list) -> Volume:
    for aug, record in reversed(view):
        volume = aug.invert(volume, record)
    return volume


def view_records(view: list) -> list[AugmentationRecord]:
    return [record for _, record in view]


def patch_geometry(spatial_shape, patch: PatchConfig, model_dim: int) -> tuple[PatchGrid, SlabSpec | None, int | None]:
    """Grid, optional slab and the axis squeezed away for a 2D model.

    Without a Patch section a 2D model sees whole slices along D.
    """
    size = patch.patch_size
    if size is None:
        size = tuple(spatial_shape) if model_dim == 3 else (1,) + tuple(spatial_shape[1:])
    if len(size) != 3:
        raise ShapeError(f"patch_size needs 3 extents (D, H, W), got {list(size)}")
    grid = compute_grid(spatial_shape, size, patch.overlap)
    slab = SlabSpec.from_patch(size, patch.extend_slice)
    squeeze = None
    if model_dim == 2:
        unit = [a for a, p in enumerate(size) if p == 1]
        if not unit:
            raise ShapeError(f"a 2D model needs a patch axis of extent 1, got patch_size {list(size)}")
        squeeze = slab.axis if slab is not None else unit[0]
    return grid, slab, squeeze


def cut(volume: Volume, grid: PatchGrid, index: int, slab: SlabSpec | None, squeeze: int | None,
        pad_value: float, patch_transforms=()) -> np.ndarray:
    arr = extract_patch(volume.array, grid, index, slab, pad_value)
    if patch_transforms:
        arr = apply_transforms(patch_transforms, Volume(arr)).array
    return arr if squeeze is None else np.squeeze(arr, axis=1 + squeeze)


def model_input(volumes: dict[str, Volume], plan: DatasetPlan, grid, index, slab, squeeze) -> np.ndarray:
    parts = [
        cut(volumes[d], grid, index, slab, squeeze, plan.patch.pad_value, plan.group(d).patch_transforms)
        for d in plan.inputs
    ]
    return np.concatenate(parts, axis=0).astype(np.float32, copy=False)


def target_patch(volume: Volume, plan: DatasetPlan, dest: str, grid, index, squeeze) -> np.ndarray:
    """The supervision patch: center slice only, never a slab."""
    arr = cut(volume, grid, index, None, squeeze, 0, plan.group(dest).patch_transforms)
    return arr


def restore_axis(pred: np.ndarray, squeeze: int | None) -> np.ndarray:
    return pred if squeeze is None else np.expand_dims(pred, axis=1 + squeeze)


def group_channels(volumes: dict[str, Volume]) -> dict[str, int]:
    return {name: v.channels for name, v in volumes.items()}
