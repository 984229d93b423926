"""Volume: a channel-first array with physical geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Volume:
    """Scalar or multi-channel grid of shape (C, D, H, W).

    ``spacing``, ``origin`` and ``direction`` follow the ITK convention: they
    are ordered x, y, z (fastest-varying array axis first), and have one
    entry per spatial dimension of the source file (2 or 3).  2D images are
    stored with D == 1.
    """

    array: np.ndarray
    spacing: tuple[float, ...] = (1.0, 1.0, 1.0)
    origin: tuple[float, ...] = (0.0, 0.0, 0.0)
    direction: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        if self.array.ndim != 4:
            raise ValueError(f"Volume arrays are (C, D, H, W); got shape {self.array.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        nd = len(self.spacing)
        if nd not in (2, 3) or len(self.origin) != nd or self.direction.shape != (nd, nd):
            raise ValueError("spacing, origin and direction must agree on 2 or 3 spatial dimensions")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.allclose(self.direction @ self.direction.T, np.eye(nd), atol=1e-4):
            raise ValueError("direction matrix is not orthonormal")

    @property
    def ndims(self) -> int:
        return len(self.spacing)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.array.shape[1:]

    @property
    def channels(self) -> int:
        return self.array.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.array.dtype

    def axis_spacing(self) -> tuple[float, float, float]:
        """Spacing per array axis (D, H, W); a 2D image reports 1.0 for D."""
        rev = tuple(reversed(self.spacing))
        return (1.0,) * (3 - len(rev)) + rev

    def with_array(self, array: np.ndarray, **geometry) -> "Volume":
        params = dict(spacing=self.spacing, origin=self.origin, direction=self.direction.copy())
        params.update(geometry)
        return Volume(np.ascontiguousarray(array), **params)

    def same_geometry(self, other: "Volume") -> bool:
        return (
            self.spatial_shape == other.spatial_shape
            and self.spacing == other.spacing
            and self.origin == other.origin
            and np.array_equal(self.direction, other.direction)
        )
