"""Writer for the binary embedding container consumed by the QE toolkit.

Layout (little-endian):
    magic "SQEM" | version u32 | dim u32 | count u64
    per record: key_len u16 | key UTF-8 | frames u32 | frames*dim float32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SQEM"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class ExportError(Exception):
    pass


def write_container(path: str | Path, dim: int, records: list[tuple[str, np.ndarray]]) -> None:
    """Single-writer append in record order; bit-exact float32 payloads."""
    seen: set[str] = set()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(records)))
        for key, matrix in records:
            if key in seen:
                raise ExportError(f"duplicate container key {key!r}")
            seen.add(key)
            raw_key = key.encode("utf-8")
            if not 0 < len(raw_key) <= 0xFFFF:
                raise ExportError(f"container key length out of range: {key[:32]!r}")
            arr = np.ascontiguousarray(matrix, dtype="<f4")
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != dim:
                raise ExportError(f"record {key!r}: expected a (frames, {dim}) matrix, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ExportError(f"record {key!r}: non-finite embedding values")
            fh.write(struct.pack("<H", len(raw_key)))
            fh.write(raw_key)
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.tobytes())
