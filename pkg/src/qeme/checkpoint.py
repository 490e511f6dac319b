"""Model checkpoint container: JSON shape table followed by float32 parameter blobs.

Layout (little-endian):
    magic "SQEC" | version u32 | table_len u32 | table JSON UTF-8 | float32 blobs

The table is {"meta": {...}, "arrays": [{"name": ..., "shape": [...]}, ...]};
blobs are concatenated in table order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

MAGIC = b"SQEC"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def save_blobs(path: str | Path, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write named float32 arrays plus a JSON metadata block; rejects non-finite parameters."""
    table = {"meta": meta, "arrays": []}
    blobs = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        if not np.all(np.isfinite(arr)):
            raise InputError(f"parameter {name!r} contains non-finite values")
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        table["arrays"].append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr32.tobytes())
    raw_table = json.dumps(table, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(raw_table)))
        fh.write(raw_table)
        for blob in blobs:
            fh.write(blob)


def load_blobs(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (meta, {name: float32 array}); rejects format damage and NaN parameters."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, table_len = _HEADER.unpack(buf[: _HEADER.size])
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    offset = _HEADER.size
    if offset + table_len > len(buf):
        raise FormatError(f"{path}: truncated shape table")
    try:
        table = json.loads(buf[offset : offset + table_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupted shape table: {exc}") from None
    offset += table_len
    if not isinstance(table, dict) or "meta" not in table or "arrays" not in table:
        raise FormatError(f"{path}: corrupted shape table: missing meta/arrays")
    arrays: dict[str, np.ndarray] = {}
    for entry in table["arrays"]:
        try:
            name, shape = entry["name"], tuple(int(s) for s in entry["shape"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{path}: corrupted shape table entry {entry!r}") from None
        size = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        if offset + size > len(buf):
            raise FormatError(f"{path}: truncated blob for {name!r} at byte offset {offset}")
        arr = np.frombuffer(buf[offset : offset + size], dtype="<f4").reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: parameter {name!r} contains non-finite values")
        if name in arrays:
            raise FormatError(f"{path}: duplicate parameter name {name!r}")
        arrays[name] = arr
        offset += size
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes after parameter blobs")
    return table["meta"], arrays
