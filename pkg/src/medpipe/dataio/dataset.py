"""Case directories, group discovery and deterministic dataset ordering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import CaseMismatch, EmptyDataset, MissingGroup
from .metaimage import read_metaimage
from .volume import Volume


@dataclass(frozen=True)
class DatasetFilenameSpec:
    """``<path>:<tag>:<ext>`` (input datasets) or ``<path>:<ext>`` (output datasets).

    The tag is an opaque role label that is only carried along for logging.
    """

    path: str
    ext: str
    tag: str | None = None

    @classmethod
    def parse(cls, text: str) -> "DatasetFilenameSpec":
        parts = str(text).strip().split(":")
        if len(parts) == 3:
            path, tag, ext = parts
        elif len(parts) == 2:
            (path, ext), tag = parts, None
        else:
            raise ValueError(f"expected '<path>:<tag>:<ext>' or '<path>:<ext>', got {text!r}")
        if not path or not ext:
            raise ValueError(f"dataset filename {text!r} needs a non-empty path and extension")
        if tag is not None and len(tag) != 1:
            raise ValueError(f"dataset tag must be a single character, got {tag!r}")
        return cls(path=path, ext=ext.lstrip("."), tag=tag)

    def __str__(self) -> str:
        return f"{self.path}:{self.tag}:{self.ext}" if self.tag else f"{self.path}:{self.ext}"

    def directory(self, root: Path) -> Path:
        return (Path(root) / self.path).resolve()


@dataclass
class Case:
    name: str
    groups: dict[str, Path] = field(default_factory=dict)


@dataclass
class DatasetIndex:
    cases: list[Case]
    sources: list[DatasetFilenameSpec]

    def names(self) -> list[str]:
        return [c.name for c in self.cases]

    def __len__(self) -> int:
        return len(self.cases)


def group_file_name(group: str, ext: str) -> str:
    """File name used when writing a group; ``seg`` is stored as ``Seg.<ext>``."""
    return f"{group[:1].upper()}{group[1:]}.{ext}"


def _find_group(files: dict[str, Path], group: str) -> Path | None:
    if group in files:
        return files[group]
    folded = {k.lower(): v for k, v in files.items()}
    return folded.get(group.lower())


def _scan(spec: DatasetFilenameSpec, root: Path) -> dict[str, dict[str, Path]]:
    base = spec.directory(root)
    if not base.is_dir():
        raise EmptyDataset(f"dataset directory {base} does not exist")
    suffix = "." + spec.ext
    out = {}
    for case_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        files = {
            f.name[: -len(suffix)]: f
            for f in sorted(case_dir.iterdir())
            if f.is_file() and f.name.endswith(suffix)
        }
        out[case_dir.name] = files
    return out


def _read_subset(subset, root: Path) -> list:
    if isinstance(subset, str):
        path = Path(root) / subset
        return [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    return list(subset)


def index_dataset(
    specs: Sequence[DatasetFilenameSpec],
    groups_src: Iterable[str],
    subset=None,
    shuffle: bool = False,
    seed: int | None = None,
    root: str | Path = ".",
    require_all_sources: bool = False,
) -> DatasetIndex:
    """Discover cases under every source directory and check their groups.

    Cases are ordered lexicographically, then ``subset`` (a list of indices or
    a file of case names) is applied, then the order is shuffled with ``seed``
    when ``shuffle`` is set.  With ``require_all_sources`` a case that is
    missing from any source raises :class:`CaseMismatch`.
    """
    root = Path(root)
    scans = [_scan(spec, root) for spec in specs]
    all_names = sorted(set().union(*(s.keys() for s in scans))) if scans else []
    if require_all_sources:
        for name in all_names:
            for spec, scan in zip(specs, scans):
                if name not in scan:
                    raise CaseMismatch(name, f" (missing from {spec.path})")

    groups = list(groups_src)
    cases = []
    for name in all_names:
        files: dict[str, Path] = {}
        for scan in scans:
            for group, path in scan.get(name, {}).items():
                files.setdefault(group, path)
        resolved = {}
        for group in groups:
            path = _find_group(files, group)
            if path is None:
                raise MissingGroup(name, group)
            resolved[group] = path
        cases.append(Case(name, resolved))

    if subset is not None:
        wanted = _read_subset(subset, root)
        by_name = {c.name: c for c in cases}
        picked = []
        for item in wanted:
            if isinstance(item, str) and not item.lstrip("-").isdigit():
                if item not in by_name:
                    raise EmptyDataset(f"subset names unknown case '{item}'")
                picked.append(by_name[item])
            else:
                picked.append(cases[int(item)])
        cases = picked

    if not cases:
        raise EmptyDataset("no cases found in " + ", ".join(str(s) for s in specs))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(cases))
        cases = [cases[i] for i in order]
    return DatasetIndex(cases=cases, sources=list(specs))


def split_validation(names: Sequence[str], validation, root: str | Path = ".") -> tuple[list[str], list[str]]:
    """Split case names into (train, validation).

    A float in (0, 1) holds out the last ``round(ratio * n)`` cases of the
    sorted name list (at least one, never all); a string names a text file
    listing validation cases.  ``None`` keeps every case in training.
    """
    ordered = sorted(names)
    if validation is None:
        return list(names), []
    if isinstance(validation, str):
        held = {ln.strip() for ln in (Path(root) / validation).read_text().splitlines() if ln.strip()}
    else:
        ratio = float(validation)
        if not 0 < ratio < 1:
            raise ValueError(f"validation ratio must be in (0, 1), got {ratio}")
        if len(ordered) < 2:
            return list(names), []
        k = min(max(1, math.floor(ratio * len(ordered) + 0.5)), len(ordered) - 1)
        held = set(ordered[-k:])
    return [n for n in names if n not in held], [n for n in names if n in held]


class CaseLoader:
    """Reads group volumes; with ``cache`` every volume is read once and kept."""

    def __init__(self, index: DatasetIndex, cache: bool = False):
        self.index = index
        self.cache = cache
        self._store: dict[tuple[str, str], Volume] = {}
        self._cases = {c.name: c for c in index.cases}

    def preload(self) -> None:
        if self.cache:
            for case in self.index.cases:
                for group in case.groups:
                    self.load(case.name, group)

    def load(self, case: str, group: str) -> Volume:
        key = (case, group)
        if key in self._store:
            return self._store[key]
        vol = read_metaimage(self._cases[case].groups[group])
        if self.cache:
            self._store[key] = vol
        return vol
