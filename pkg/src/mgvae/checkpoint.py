"""Versioned binary checkpoint format for named parameter groups.

Layout (little-endian), documented in docs/FORMATS.md:

    magic   8 bytes  b"MGVAECK1"
    version u32      currently 1
    meta    u32 length + UTF-8 JSON (model/config metadata)
    groups  u32 count, then per group:
        name    u16 length + UTF-8
        tensors u32 count, then per tensor:
            name  u16 length + UTF-8
            dtype u8 (0 = float32, 1 = float64)
            ndim  u8, then ndim x u32 dims
            data  raw little-endian values, row-major

Values are stored at their in-memory precision so that a save/load round
trip is bit-exact at either supported precision.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MGVAECK1"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, groups: dict[str, dict[str, np.ndarray]],
                    meta: dict | None = None) -> None:
    path = Path(path)
    chunks: list[bytes] = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_bytes)))
    chunks.append(meta_bytes)
    chunks.append(struct.pack("<I", len(groups)))
    for gname, tensors in groups.items():
        gb = gname.encode("utf-8")
        chunks.append(struct.pack("<H", len(gb)))
        chunks.append(gb)
        chunks.append(struct.pack("<I", len(tensors)))
        for tname, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise CheckpointError(f"{gname}/{tname}: unsupported dtype {arr.dtype}")
            tb = tname.encode("utf-8")
            chunks.append(struct.pack("<H", len(tb)))
            chunks.append(tb)
            chunks.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            code = _DTYPE_CODES[arr.dtype]
            chunks.append(np.ascontiguousarray(arr).astype(_CODE_DTYPES[code]).tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(MAGIC)

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise CheckpointError(f"{path}: truncated at offset {off}")
        vals = struct.unpack_from(fmt, raw, off)
        off += size
        return vals

    def take_str(len_fmt: str) -> str:
        (n,) = take(len_fmt)
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError(f"{path}: truncated string")
        s = raw[off:off + n].decode("utf-8")
        off += n
        return s

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = take("<I")
    meta = json.loads(raw[off:off + meta_len].decode("utf-8"))
    off += meta_len

    groups: dict[str, dict[str, np.ndarray]] = {}
    (n_groups,) = take("<I")
    for _ in range(n_groups):
        gname = take_str("<H")
        (n_tensors,) = take("<I")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            tname = take_str("<H")
            code, ndim = take("<BB")
            if code not in _CODE_DTYPES:
                raise CheckpointError(f"{path}: bad dtype code {code}")
            shape = take(f"<{ndim}I")
            dtype = _CODE_DTYPES[code]
            count = int(np.prod(shape)) if ndim else 1
            nbytes = count * dtype.itemsize
            if off + nbytes > len(raw):
                raise CheckpointError(f"{path}: truncated tensor data for {gname}/{tname}")
            arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).reshape(shape)
            tensors[tname] = arr.astype(dtype.newbyteorder("="))
            off += nbytes
        groups[gname] = tensors
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return groups, meta
