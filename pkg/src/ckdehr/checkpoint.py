"""Flat binary tensor checkpoints.

Layout (all integers little-endian)::

    b"CKDF"  u32 version  u32 tensor_count
    per tensor:
        u32 name_len  name (UTF-8)  u32 rank  u64 extent * rank
        f64 payload * prod(extents), row-major
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Mapping

import numpy as np

MAGIC = b"CKDF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    _write(buf, tensors)
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    return _read(io.BytesIO(blob))


def save(path: str | os.PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        _write(fh, tensors)


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return _read(fh)


def _write(fh: BinaryIO, tensors: Mapping[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def _take(fh: BinaryIO, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def _read(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _take(fh, 4) != MAGIC:
        raise CheckpointError("not a CKDF checkpoint (bad magic)")
    version, count = struct.unpack("<II", _take(fh, 8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", _take(fh, 4))
        name = _take(fh, nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", _take(fh, 4))
        shape = struct.unpack(f"<{rank}Q", _take(fh, 8 * rank))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(_take(fh, 8 * n), dtype="<f8").astype(np.float64)
        out[name] = data.reshape(shape)
    return out
