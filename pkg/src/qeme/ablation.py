"""Source-reliance analysis: mismatch every source via a seeded derangement of
segments and measure the change in segment-level tau-b."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus import ScoreMatrix, SegmentRecord, shuffle_source_fields
from .errors import InputError
from .metrics import segment_tau

MODALITIES = ("text", "audio", "both")


@dataclass
class ShufflePlan:
    """A derangement over seg_ids: no source stays with its own segment."""

    mapping: dict[str, str]
    modality: str
    seed: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InputError(f"unknown shuffle modality {self.modality!r}, expected one of {MODALITIES}")
        sources = set(self.mapping)
        targets = set(self.mapping.values())
        if sources != targets:
            raise InputError("shuffle mapping is not a bijection over seg_ids")
        if len(self.mapping) >= 2 and any(k == v for k, v in self.mapping.items()):
            raise InputError("shuffle mapping has a fixed point; every source must be mismatched")


@dataclass
class AblationReport:
    tau_real: float
    tau_shuffled: float
    delta: float
    modality: str
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "tau_real": self.tau_real,
            "tau_shuffled": self.tau_shuffled,
            "delta": self.delta,
            "modality": self.modality,
            "seed": self.seed,
        }


def _distinct_seg_ids(records: list[SegmentRecord]) -> list[str]:
    seen: dict[str, None] = {}
    for rec in records:
        seen.setdefault(rec.seg_id)
    return list(seen)


def make_shuffle(records: list[SegmentRecord], modality: str, seed: int) -> ShufflePlan:
    """Seeded derangement of the corpus's segments (cyclic, so no fixed points)."""
    seg_ids = _distinct_seg_ids(records)
    if len(seg_ids) < 2:
        raise InputError(f"need at least 2 distinct segments to mismatch sources, got {len(seg_ids)}")
    shuffled = list(seg_ids)
    rng = np.random.default_rng(seed)
    # Sattolo's algorithm: the result is a uniform random cycle, hence a derangement
    for i in range(len(shuffled) - 1, 0, -1):
        j = int(rng.integers(0, i))
        shuffled[i], shuffled[j] = shuffled[j], shuffled[i]
    return ShufflePlan(mapping=dict(zip(seg_ids, shuffled)), modality=modality, seed=seed)


def apply_shuffle(records: list[SegmentRecord], plan: ShufflePlan) -> list[SegmentRecord]:
    """Swap source fields between segments per the plan; hypotheses, scores, and ids untouched."""
    src_text_of: dict[str, str | None] = {}
    audio_key_of: dict[str, str | None] = {}
    for rec in records:
        src_text_of.setdefault(rec.seg_id, rec.src_text)
        audio_key_of.setdefault(rec.seg_id, rec.audio_key)
    missing = [seg for seg in src_text_of if seg not in plan.mapping]
    if missing:
        raise InputError(f"seg_ids missing from the shuffle plan: {sorted(missing)[:5]}")
    swap_text = plan.modality in ("text", "both")
    swap_audio = plan.modality in ("audio", "both")
    no_text = all(v is None for v in src_text_of.values())
    no_audio = all(v is None for v in audio_key_of.values())
    if plan.modality == "text" and no_text:
        raise InputError("corpus has no src_text fields; nothing to shuffle for modality 'text'")
    if plan.modality == "audio" and no_audio:
        raise InputError("corpus has no audio_key fields; nothing to shuffle for modality 'audio'")
    if plan.modality == "both" and no_text and no_audio:
        raise InputError("corpus has no source fields; nothing to shuffle")
    out = []
    for rec in records:
        donor = plan.mapping[rec.seg_id]
        out.append(
            shuffle_source_fields(
                rec,
                src_text=src_text_of[donor] if swap_text else ...,
                audio_key=audio_key_of[donor] if swap_audio else ...,
            )
        )
    return out


def ablate(
    scorer: Callable[[list[SegmentRecord]], ScoreMatrix],
    records: list[SegmentRecord],
    human: ScoreMatrix,
    modality: str,
    seed: int,
) -> AblationReport:
    """Score the corpus with real and mismatched sources; report the tau drop.

    `scorer` maps a corpus to a ScoreMatrix and must resolve the shuffled
    source fields itself (model scorers from `make_model_scorer` do).
    """
    plan = make_shuffle(records, modality, seed)
    real = segment_tau(human, scorer(records))
    shuffled = segment_tau(human, scorer(apply_shuffle(records, plan)))
    if real.value is None or shuffled.value is None:
        raise InputError("segment tau is undefined for the real or shuffled corpus; cannot ablate")
    return AblationReport(
        tau_real=real.value,
        tau_shuffled=shuffled.value,
        delta=shuffled.value - real.value,
        modality=modality,
        seed=seed,
    )


def make_model_scorer(model, sources, base_records: list[SegmentRecord]) -> Callable[[list[SegmentRecord]], ScoreMatrix]:
    """Build a corpus scorer from an estimator model.

    Source-text embeddings are keyed by seg_id, so the scorer carries a
    src_text -> seg_id index built from the unshuffled corpus; a shuffled
    record then resolves to the embedding of the segment its text came from.
    """
    from .estimator import predict

    text_index = {rec.src_text: rec.seg_id for rec in base_records if rec.src_text is not None}
    index = text_index if model.config.uses_src_text else None

    def scorer(recs: list[SegmentRecord]) -> ScoreMatrix:
        return predict(model, recs, sources, text_index=index)

    return scorer
