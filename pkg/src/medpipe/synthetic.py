"""Small synthetic CT-like dataset with geometric masks, for smoke tests and demos.

``python -m medpipe.synthetic <workspace>`` writes ``<workspace>/Dataset/Patient_<k>/{CT,MASK}.mha``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .dataio import Volume, write_metaimage

BACKGROUND_HU = -700.0
FOREGROUND_HU = 250.0
NOISE_HU = 150.0


def shape_mask(kind: str, shape: tuple[int, int, int], center, radius) -> np.ndarray:
    zz, yy, xx = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in shape), indexing="ij")
    d = [(zz - center[0]) / radius[0], (yy - center[1]) / radius[1], (xx - center[2]) / radius[2]]
    if kind == "ellipsoid":
        return (d[0] ** 2 + d[1] ** 2 + d[2] ** 2) <= 1.0
    if kind == "box":
        return (np.abs(d[0]) <= 1) & (np.abs(d[1]) <= 1) & (np.abs(d[2]) <= 1)
    if kind == "cylinder":
        return (np.abs(d[0]) <= 1) & (d[1] ** 2 + d[2] ** 2 <= 1.0)
    raise ValueError(f"unknown shape kind {kind!r}")


KINDS = ("ellipsoid", "box", "cylinder")


def make_case(index: int, shape=(16, 16, 16), seed: int = 0) -> tuple[Volume, Volume]:
    rng = np.random.default_rng([seed, index])
    kind = KINDS[index % len(KINDS)]
    n = np.asarray(shape, dtype=np.float64)
    center = n / 2 + rng.uniform(-1.5, 1.5, size=3)
    radius = n * rng.uniform(0.22, 0.32, size=3)
    mask = shape_mask(kind, tuple(shape), center, radius)
    ct = np.where(mask, FOREGROUND_HU, BACKGROUND_HU) + rng.normal(0.0, NOISE_HU, size=shape)
    ct_vol = Volume(ct.astype(np.int16)[None])
    mask_vol = Volume(mask.astype(np.uint8)[None])
    return ct_vol, mask_vol


def make_dataset(root, nb_cases: int = 4, shape=(16, 16, 16), seed: int = 0, name: str = "Dataset") -> list[Path]:
    """Write ``<root>/<name>/Patient_<k>/CT.mha`` and ``MASK.mha``; returns the case directories."""
    out = []
    for k in range(nb_cases):
        ct, mask = make_case(k, tuple(shape), seed)
        case_dir = Path(root) / name / f"Patient_{k + 1}"
        write_metaimage(ct, case_dir / "CT.mha")
        write_metaimage(mask, case_dir / "MASK.mha")
        out.append(case_dir)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m medpipe.synthetic", description=__doc__.splitlines()[0])
    parser.add_argument("workspace", type=Path)
    parser.add_argument("--cases", type=int, default=4)
    parser.add_argument("--size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for d in make_dataset(args.workspace, args.cases, (args.size,) * 3, args.seed):
        print(d)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
