"""Output writers for predicted volumes."""

from __future__ import annotations

from pathlib import Path

from ..dataio import Volume, group_file_name, write_metaimage
from ..errors import ShapeError


class OutputWriter:
    def write(self, volume: Volume, reference: Volume | None, directory: Path, case: str,
              group: str, ext: str) -> Path:
        raise NotImplementedError


class OutSameAsGroupDataset(OutputWriter):
    """Writes ``<directory>/<case>/<Group>.<ext>`` carrying the reference geometry."""

    def write(self, volume, reference, directory, case, group, ext):
        if ext != "mha":
            raise ValueError(f"only the mha output format is supported, got '{ext}'")
        if reference is not None:
            if reference.spatial_shape != volume.spatial_shape:
                raise ShapeError(
                    f"prediction extents {volume.spatial_shape} differ from reference {reference.spatial_shape}"
                )
            volume = volume.with_array(volume.array, spacing=reference.spacing, origin=reference.origin,
                                       direction=reference.direction)
        path = Path(directory) / case / group_file_name(group, ext)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_metaimage(volume, path)
        return path
