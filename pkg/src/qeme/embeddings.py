"""Binary embedding container: keyed float32 vectors or frame sequences.

Layout (all little-endian):
    magic "SQEM" | version u32 | dim u32 | count u64
    then per record: key_len u16 | key UTF-8 | frames u32 | frames*dim float32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

MAGIC = b"SQEM"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class EmbeddingStore:
    """Keyed collection of (frames, dim) float32 matrices; frames == 1 for sentence-level entries."""

    def __init__(self, dim: int):
        if dim < 1:
            raise InputError(f"embedding dim must be positive, got {dim}")
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}

    def add(self, key: str, matrix) -> None:
        if not key:
            raise InputError("embedding key must be non-empty")
        if key in self._entries:
            raise InputError(f"duplicate embedding key {key!r}")
        if len(key.encode("utf-8")) > 0xFFFF:
            raise InputError(f"embedding key too long: {key[:32]!r}...")
        arr = np.asarray(matrix, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InputError(f"entry {key!r}: expected a (frames, dim) matrix with frames >= 1")
        if arr.shape[1] != self.dim:
            raise InputError(f"entry {key!r}: has {arr.shape[1]} columns, store dim is {self.dim}")
        if not np.all(np.isfinite(arr)):
            raise InputError(f"entry {key!r}: contains non-finite values")
        self._entries[key] = np.ascontiguousarray(arr)

    def get(self, key: str) -> np.ndarray:
        try:
            return self._entries[key]
        except KeyError:
            raise KeyError(f"embedding key {key!r} not found") from None

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def items(self):
        return self._entries.items()


def write_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Write a store to the binary container; payloads round-trip bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, store.dim, len(store)))
        for key, arr in store.items():
            raw = key.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.astype("<f4", copy=False).tobytes())


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    end = offset + size
    if end > len(buf):
        raise FormatError(f"truncated container: needed {size} bytes for {what} at byte offset {offset}")
    return buf[offset:end], end


def read_embeddings(path: str | Path) -> EmbeddingStore:
    """Read a binary embedding container, validating the format and all invariants."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    head, offset = _take(buf, 0, _HEADER.size, "header")
    magic, version, dim, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    if dim < 1:
        raise FormatError(f"{path}: header dim must be positive, got {dim}")
    store = EmbeddingStore(dim)
    for i in range(count):
        raw, offset = _take(buf, offset, 2, f"record {i} key length")
        (key_len,) = struct.unpack("<H", raw)
        raw, offset = _take(buf, offset, key_len, f"record {i} key")
        try:
            key = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: record {i} key is not valid UTF-8") from None
        raw, offset = _take(buf, offset, 4, f"record {i} frame count")
        (frames,) = struct.unpack("<I", raw)
        if frames < 1:
            raise FormatError(f"{path}: record {key!r} has zero frames")
        raw, offset = _take(buf, offset, frames * dim * 4, f"record {key!r} payload")
        arr = np.frombuffer(raw, dtype="<f4").reshape(frames, dim).copy()
        try:
            store.add(key, arr)
        except InputError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes after {count} records at byte offset {offset}")
    return store
