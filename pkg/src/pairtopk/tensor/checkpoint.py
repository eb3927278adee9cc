"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic      4 bytes   b"PTKC"
    version    u16       currently 1
    seed       i64
    step       u64
    meta_len   u32       length of the UTF-8 JSON metadata blob
    meta       bytes     model config, vocabulary, label names
    count      u32       number of tensors
    per tensor:
        name_len u16, name (UTF-8), ndim u8, dims u32 * ndim,
        payload  float64 little-endian, row-major, prod(dims) values
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from pairtopk.errors import DataError

MAGIC = b"PTKC"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], *, seed: int, step: int,
                    meta: dict | None = None) -> None:
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HqQI", VERSION, seed, step, len(blob)), blob,
             struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode()
        parts.append(struct.pack("<HB", len(encoded), arr.ndim) + encoded)
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int, int, dict]:
    """Return ``(arrays, seed, step, meta)``."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    offset = 4
    version, seed, step, meta_len = struct.unpack_from("<HqQI", buf, offset)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    offset += struct.calcsize("<HqQI")
    meta = json.loads(buf[offset:offset + meta_len].decode())
    offset += meta_len
    (count,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len, ndim = struct.unpack_from("<HB", buf, offset)
        offset += 3
        name = buf[offset:offset + name_len].decode()
        offset += name_len
        shape = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    if offset != len(buf):
        raise DataError(f"{path}: trailing bytes after last tensor")
    return arrays, seed, step, meta
