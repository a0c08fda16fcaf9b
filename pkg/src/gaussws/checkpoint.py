"""Binary checkpoint container.

Layout (all little-endian)::

    b"PQTC" | u32 version | u32 n_entries
    n_entries x (u32 name_len | name utf-8 | u8 dtype | u32 rank | rank x u64 dim | u64 offset)
    payloads, 8 bytes per element, at the recorded absolute offsets

dtype 1 is float64, dtype 2 is uint64 (used for stream keys).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"PQTC"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<u8")}


class CheckpointError(ValueError):
    pass


def _tag(arr: np.ndarray) -> int:
    if arr.dtype.kind == "f":
        return 1
    if arr.dtype.kind in "ui":
        return 2
    raise CheckpointError(f"unsupported dtype {arr.dtype}")


def save_checkpoint(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    arrays = [(name, np.asarray(v)) for name, v in entries.items()]
    header_size = 12
    for name, arr in arrays:
        header_size += 4 + len(name.encode()) + 1 + 4 + 8 * arr.ndim + 8
    table, payload = [], []
    offset = header_size
    for name, arr in arrays:
        tag = _tag(arr)
        data = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        raw = name.encode()
        table.append(struct.pack("<I", len(raw)) + raw + struct.pack("<BI", tag, arr.ndim))
        table.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) + struct.pack("<Q", offset))
        payload.append(data)
        offset += len(data)
    blob = MAGIC + struct.pack("<II", VERSION, len(arrays)) + b"".join(table) + b"".join(payload)
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    try:
        if blob[:4] != MAGIC:
            raise CheckpointError("not a PQTC checkpoint")
        version, n = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        out = {}
        for _ in range(n):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode()
            pos += name_len
            tag, rank = struct.unpack_from("<BI", blob, pos)
            pos += 5
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            (offset,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            if tag not in _DTYPES:
                raise CheckpointError(f"entry {name}: unknown dtype tag {tag}")
            count = int(np.prod(dims, dtype=np.int64))
            if offset + 8 * count > len(blob):
                raise CheckpointError(f"entry {name}: payload runs past end of file")
            out[name] = np.frombuffer(blob, _DTYPES[tag], count, offset).reshape(dims).copy()
        return out
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
