"""Checkpoint container: magic header, JSON manifest, little-endian blobs.

Layout::

    b"MEDPIPECKPT" + version byte
    u64 little-endian manifest length
    manifest (UTF-8 JSON, sorted keys)
    parameter blobs, then EMA blobs, in manifest order
"""

from __future__ import annotations

import json
import os
import struct
import time
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CheckpointLoadError

MAGIC = b"MEDPIPECKPT"
VERSION = 1
TIMESTAMP_FORMAT = "%Y_%m_%d_%H_%M_%S"


def _blobs(params: Mapping[str, np.ndarray], offset: int) -> tuple[list[dict], list[bytes], int]:
    entries, chunks = [], []
    for name in params:
        arr = np.ascontiguousarray(params[name])
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str.lstrip("<>|="),
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    return entries, chunks, offset


def encode_checkpoint(params: Mapping[str, np.ndarray], ema: Mapping[str, np.ndarray] | None = None,
                      meta: Mapping | None = None) -> bytes:
    p_entries, p_chunks, end = _blobs(params, 0)
    e_entries, e_chunks = None, []
    if ema is not None:
        e_entries, e_chunks, _ = _blobs(ema, end)
    manifest = {"version": VERSION, "parameters": p_entries, "ema": e_entries, "meta": dict(meta or {})}
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, bytes([VERSION]), struct.pack("<Q", len(mbytes)), mbytes, *p_chunks, *e_chunks])


def _read_blobs(entries, payload: bytes) -> dict[str, np.ndarray]:
    out = {}
    for e in entries:
        start, n = e["offset"], e["nbytes"]
        if start + n > len(payload):
            raise CheckpointLoadError(f"checkpoint payload truncated at parameter '{e['name']}'")
        dtype = np.dtype("<" + e["dtype"]) if np.dtype(e["dtype"]).itemsize > 1 else np.dtype(e["dtype"])
        arr = np.frombuffer(payload[start:start + n], dtype=dtype).reshape(e["shape"])
        out[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return out


def decode_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None, dict]:
    head = len(MAGIC) + 1 + 8
    if len(data) < head or not data.startswith(MAGIC):
        raise CheckpointLoadError("not a checkpoint file (bad magic)")
    if data[len(MAGIC)] != VERSION:
        raise CheckpointLoadError(f"unsupported checkpoint version {data[len(MAGIC)]}")
    (mlen,) = struct.unpack("<Q", data[len(MAGIC) + 1:head])
    try:
        manifest = json.loads(data[head:head + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointLoadError(f"corrupt checkpoint manifest: {exc}") from None
    payload = data[head + mlen:]
    params = _read_blobs(manifest["parameters"], payload)
    ema = _read_blobs(manifest["ema"], payload) if manifest.get("ema") is not None else None
    return params, ema, manifest.get("meta", {})


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointLoadError(f"cannot read checkpoint {path}: {exc}") from None
    return decode_checkpoint(data)


def inference_parameters(path) -> dict[str, np.ndarray]:
    """EMA parameters when the checkpoint has them, raw parameters otherwise."""
    params, ema, _ = load_checkpoint(path)
    return ema if ema is not None else params


class CheckpointWriter:
    """Names files ``YYYY_MM_DD_HH_MM_SS.pt`` (local time), strictly increasing per run.

    ``mode`` BEST keeps a single file: each new save removes the previous one.
    """

    def __init__(self, directory: Path, mode: str = "BEST", clock=time.time):
        if mode not in ("ALL", "BEST"):
            raise ValueError(f"save_checkpoint_mode must be ALL or BEST, got {mode!r}")
        self.directory = Path(directory)
        self.mode = mode
        self.clock = clock
        self._last_ts: int | None = None
        self.current: Path | None = None
        self.saved: list[Path] = []

    def _name(self) -> Path:
        ts = int(self.clock())
        existing = sorted(self.directory.glob("*.pt")) if self.directory.is_dir() else []
        for p in existing:
            try:
                ts = max(ts, int(time.mktime(time.strptime(p.stem, TIMESTAMP_FORMAT))) + 1)
            except ValueError:
                continue
        if self._last_ts is not None:
            ts = max(ts, self._last_ts + 1)
        self._last_ts = ts
        return self.directory / (time.strftime(TIMESTAMP_FORMAT, time.localtime(ts)) + ".pt")

    def save(self, params, ema=None, meta=None) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._name()
        tmp = path.with_suffix(".pt.tmp")
        tmp.write_bytes(encode_checkpoint(params, ema, meta))
        os.replace(tmp, path)
        if self.mode == "BEST" and self.current is not None and self.current.exists():
            self.current.unlink()
        self.current = path
        self.saved.append(path)
        return path


def latest_checkpoint(directory: Path) -> Path | None:
    files = sorted(Path(directory).glob("*.pt")) if Path(directory).is_dir() else []
    return files[-1] if files else None
