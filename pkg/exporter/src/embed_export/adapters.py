"""Encoder adapter registry.

Adapters are resolved by string id of the form "<family>-<dim>", e.g.
"hash-text-256". The reference adapters are fully deterministic and offline:
a feature-hashing text encoder and a key-seeded pseudo speech encoder. Real
pretrained encoders plug in by registering another family; the consumer side
only ever sees the container file.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

from .container import ExportError


class HashedTextEncoder:
    """Signed token-hashing sentence encoder.

    Pooled mode emits one l2-normalized bag-of-tokens vector; unpooled mode
    emits one signed one-hot frame per token.
    """

    modalities = ("text", "hyp")

    def __init__(self, family: str, dim: int):
        self.id = f"{family}-{dim}"
        self.dim = dim

    def _token_frame(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        bucket = int.from_bytes(digest[:4], "little") % self.dim
        sign = 1.0 if digest[4] & 1 else -1.0
        frame = np.zeros(self.dim, dtype=np.float32)
        frame[bucket] = sign
        return frame

    def encode(self, value: str, pooled: bool) -> np.ndarray:
        tokens = value.split()
        if not tokens:
            raise ExportError("cannot encode empty text")
        frames = np.stack([self._token_frame(tok) for tok in tokens])
        if not pooled:
            return frames
        pooled_vec = frames.sum(axis=0)
        norm = float(np.linalg.norm(pooled_vec))
        if norm > 0.0:
            pooled_vec = pooled_vec / np.float32(norm)
        return pooled_vec[None, :]


class SeededAudioEncoder:
    """Deterministic stand-in for a pretrained speech encoder.

    Embeddings are drawn from a generator seeded by the audio key's digest, so
    identical inputs always yield identical containers. Unpooled mode emits a
    key-dependent number of frames, mimicking frame-level encoders.
    """

    modalities = ("audio",)

    def __init__(self, family: str, dim: int):
        self.id = f"{family}-{dim}"
        self.dim = dim

    def encode(self, value: str, pooled: bool) -> np.ndarray:
        digest = hashlib.blake2b(value.encode("utf-8"), digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        frames = 1 if pooled else 1 + digest[8] % 6
        return (rng.standard_normal((frames, self.dim)) / np.sqrt(self.dim)).astype(np.float32)


_FAMILIES: dict[str, Callable[[str, int], object]] = {
    "hash-text": HashedTextEncoder,
    "noise-audio": SeededAudioEncoder,
}


def register_family(name: str, factory: Callable[[str, int], object]) -> None:
    if name in _FAMILIES:
        raise ExportError(f"encoder family {name!r} already registered")
    _FAMILIES[name] = factory


def list_families() -> list[str]:
    return sorted(_FAMILIES)


def get_adapter(encoder_id: str):
    """Resolve "<family>-<dim>" to a constructed adapter."""
    family, _, dim_part = encoder_id.rpartition("-")
    if not family or not dim_part.isdigit():
        raise ExportError(f"encoder id {encoder_id!r} is not of the form <family>-<dim>")
    if family not in _FAMILIES:
        raise ExportError(f"unknown encoder family {family!r}; registered: {list_families()}")
    dim = int(dim_part)
    if dim < 1:
        raise ExportError(f"encoder dim must be positive, got {dim}")
    adapter = _FAMILIES[family](family, dim)
    if adapter.dim != dim:
        raise ExportError(f"adapter {encoder_id!r} declared dim {adapter.dim}, expected {dim}")
    return adapter
