"""Dice overlap and summary statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import EmptySequence, ShapeError

PERCENTILES = (5, 25, 50, 75, 95)


def dice(pred, gt, smooth: float = 1e-6) -> float:
    """(2|A & B| + s) / (|A| + |B| + s), averaged over foreground classes.

    Foreground classes are the non-zero labels present in either map.  When
    both maps are empty the smoothed ratio s/s = 1 is returned.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"dice: prediction {pred.shape} and ground truth {gt.shape} differ")
    classes = np.union1d(np.unique(pred), np.unique(gt))
    classes = classes[classes != 0]
    if classes.size == 0:
        return 1.0
    scores = []
    for c in classes:
        a = pred == c
        b = gt == c
        inter = int(np.count_nonzero(a & b))
        scores.append((2.0 * inter + smooth) / (int(np.count_nonzero(a)) + int(np.count_nonzero(b)) + smooth))
    return float(np.mean(scores))


@dataclass(frozen=True)
class AggregateSummary:
    mean: float
    std: float
    min: float
    max: float
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    count: int

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(values) -> AggregateSummary:
    """Population std; percentiles by linear interpolation at rank p * (n - 1)."""
    x = np.sort(np.asarray(list(values), dtype=np.float64))
    if x.size == 0:
        raise EmptySequence("cannot summarise an empty sequence")
    pct = np.percentile(x, PERCENTILES, method="linear")
    if x[0] == x[-1]:
        mu, sd = float(x[0]), 0.0
    else:
        mu = math.fsum(x) / x.size
        sd = math.sqrt(math.fsum((x - mu) ** 2) / x.size)
    return AggregateSummary(
        mean=mu,
        std=sd,
        min=float(x[0]),
        max=float(x[-1]),
        p5=float(pct[0]),
        p25=float(pct[1]),
        p50=float(pct[2]),
        p75=float(pct[3]),
        p95=float(pct[4]),
        count=int(x.size),
    )
