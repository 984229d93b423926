"""MetaImage volumes and case-directory datasets."""

from .dataset import (
    Case,
    CaseLoader,
    DatasetFilenameSpec,
    DatasetIndex,
    group_file_name,
    index_dataset,
    split_validation,
)
from .metaimage import ELEMENT_TYPES, element_type_for, read_metaimage, write_metaimage
from .volume import Volume

__all__ = [
    "Case",
    "CaseLoader",
    "DatasetFilenameSpec",
    "DatasetIndex",
    "ELEMENT_TYPES",
    "Volume",
    "element_type_for",
    "group_file_name",
    "index_dataset",
    "read_metaimage",
    "split_validation",
    "write_metaimage",
]
