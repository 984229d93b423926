"""Single-file MetaImage (.mha) reader and writer.

Only ``ElementDataFile = LOCAL`` is handled: the binary payload directly
follows the text header.  Payloads may be zlib-compressed.
"""

from __future__ import annotations

import os
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError, TruncatedPayload, UnsupportedElementType
from .volume import Volume

ELEMENT_TYPES = {
    "MET_UCHAR": np.dtype("u1"),
    "MET_SHORT": np.dtype("<i2"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_INT": np.dtype("<i4"),
    "MET_FLOAT": np.dtype("<f4"),
    "MET_DOUBLE": np.dtype("<f8"),
}
_TYPE_BY_KIND = {(dt.kind, dt.itemsize): name for name, dt in ELEMENT_TYPES.items()}

_ALIASES = {
    "Position": "Offset",
    "Origin": "Offset",
    "Orientation": "TransformMatrix",
    "Rotation": "TransformMatrix",
}


def element_type_for(dtype: np.dtype) -> str:
    dtype = np.dtype(dtype)
    if dtype == np.bool_:
        return "MET_UCHAR"
    try:
        return _TYPE_BY_KIND[(dtype.kind, dtype.itemsize)]
    except KeyError:
        raise UnsupportedElementType(
            f"no MetaImage element type for {dtype}; cast to one of "
            + ", ".join(str(d) for d in ELEMENT_TYPES.values())
        ) from None


def _split_header(raw: bytes, path) -> tuple[dict[str, str], int]:
    header: dict[str, str] = {}
    pos = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: header ends without ElementDataFile")
        line = raw[pos:end].decode("ascii", errors="replace").rstrip("\r")
        pos = end + 1
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{path}: malformed header line {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        header[_ALIASES.get(key, key)] = value
        if key == "ElementDataFile":
            return header, pos


def _floats(header: dict[str, str], key: str, n: int, default) -> list[float]:
    if key not in header:
        return list(default)
    try:
        values = [float(x) for x in header[key].split()]
    except ValueError:
        raise FormatError(f"bad {key} line: {key} = {header[key]}") from None
    if len(values) != n:
        raise FormatError(f"{key} = {header[key]} should have {n} values")
    return values


def read_metaimage(path: str | os.PathLike) -> Volume:
    raw = Path(path).read_bytes()
    header, offset = _split_header(raw, path)

    for key in ("NDims", "DimSize", "ElementType"):
        if key not in header:
            raise FormatError(f"{path}: required header key {key} missing")
    try:
        ndims = int(header["NDims"])
        dims = [int(x) for x in header["DimSize"].split()]
    except ValueError:
        raise FormatError(f"{path}: bad NDims/DimSize line") from None
    if ndims not in (2, 3) or len(dims) != ndims:
        raise FormatError(f"{path}: DimSize = {header['DimSize']} does not match NDims = {ndims}")
    if header["ElementDataFile"] != "LOCAL":
        raise FormatError(f"{path}: only ElementDataFile = LOCAL is supported")
    etype = header["ElementType"]
    if etype not in ELEMENT_TYPES:
        raise UnsupportedElementType(f"{path}: ElementType = {etype}")
    dtype = ELEMENT_TYPES[etype]
    if header.get("BinaryDataByteOrderMSB", "False").lower() == "true":
        dtype = dtype.newbyteorder(">")
    channels = int(header.get("ElementNumberOfChannels", "1"))

    spacing = _floats(header, "ElementSpacing", ndims, [1.0] * ndims)
    origin = _floats(header, "Offset", ndims, [0.0] * ndims)
    direction = np.array(_floats(header, "TransformMatrix", ndims * ndims, np.eye(ndims).ravel())).reshape(ndims, ndims)

    payload = raw[offset:]
    if header.get("CompressedData", "False").lower() == "true":
        try:
            payload = zlib.decompress(payload)
        except zlib.error as exc:
            raise TruncatedPayload(f"{path}: compressed payload is corrupt ({exc})") from None
    count = int(np.prod(dims)) * channels
    if len(payload) < count * dtype.itemsize:
        raise TruncatedPayload(f"{path}: expected {count * dtype.itemsize} payload bytes, found {len(payload)}")
    flat = np.frombuffer(payload, dtype=dtype, count=count).astype(dtype.newbyteorder("="))

    spatial = tuple(reversed(dims))  # file order is x fastest
    if ndims == 2:
        spatial = (1,) + spatial
    array = flat.reshape(spatial + (channels,))
    array = np.moveaxis(array, -1, 0)
    try:
        return Volume(np.ascontiguousarray(array), spacing=spacing, origin=origin, direction=direction)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_metaimage(volume: Volume, path: str | os.PathLike, compress: bool = False) -> None:
    etype = element_type_for(volume.dtype)
    dtype = ELEMENT_TYPES[etype]
    nd = volume.ndims
    c, d, h, w = volume.shape
    if nd == 2 and d != 1:
        raise FormatError(f"2D geometry with {d} slices cannot be written")
    dims = [w, h] if nd == 2 else [w, h, d]

    data = np.moveaxis(volume.array, 0, -1).astype(dtype, copy=False)
    payload = np.ascontiguousarray(data).tobytes()
    if compress:
        payload = zlib.compress(payload)

    lines = [
        "ObjectType = Image",
        f"NDims = {nd}",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        f"CompressedData = {compress}",
    ]
    if compress:
        lines.append(f"CompressedDataSize = {len(payload)}")
    lines += [
        "TransformMatrix = " + " ".join(_fmt(v) for v in volume.direction.ravel()),
        "Offset = " + " ".join(_fmt(v) for v in volume.origin),
        "CenterOfRotation = " + " ".join("0" for _ in range(nd)),
        "ElementSpacing = " + " ".join(_fmt(v) for v in volume.spacing),
        "DimSize = " + " ".join(str(v) for v in dims),
    ]
    if c > 1:
        lines.append(f"ElementNumberOfChannels = {c}")
    lines += [f"ElementType = {etype}", "ElementDataFile = LOCAL"]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii") + payload)
