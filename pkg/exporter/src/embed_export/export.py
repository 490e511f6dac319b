"""Export jobs: run an encoder adapter over corpus records, write a container.

The corpus is consumed as JSONL with the segment-record field names; the
output is the binary container format. Keys follow the consumer's join
conventions: seg_id for source text, the record's audio_key for speech, and
"<seg_id>|<system_id>" for hypotheses.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapters import get_adapter
from .container import ExportError, write_container

log = logging.getLogger("embed_export")

MODALITIES = ("text", "audio", "hyp")


@dataclass
class ExportJob:
    corpus_path: str
    encoder_id: str
    modality: str
    output_path: str
    pooled: bool = False
    on_missing: str = "abort"  # or "skip"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ExportError(f"unknown modality {self.modality!r}, expected one of {MODALITIES}")
        if self.on_missing not in ("abort", "skip"):
            raise ExportError(f"on_missing must be abort or skip, got {self.on_missing!r}")


def _read_corpus(path: str | Path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
        for name in ("seg_id", "system_id", "mt_text"):
            if not obj.get(name):
                raise ExportError(f"{path}:{lineno}: missing required field {name!r}")
        records.append(obj)
    return records


def _keyed_values(records: list[dict], modality: str, on_missing: str) -> list[tuple[str, str]]:
    """(container key, encoder input) per record, deduplicated in corpus order."""
    out: dict[str, str] = {}
    skipped = 0
    for rec in records:
        if modality == "text":
            key, value = rec["seg_id"], rec.get("src_text")
        elif modality == "audio":
            key, value = rec.get("audio_key"), rec.get("audio_key")
        else:
            key, value = f"{rec['seg_id']}|{rec['system_id']}", rec["mt_text"]
        if key is None or value is None:
            if on_missing == "skip":
                skipped += 1
                continue
            raise ExportError(
                f"record ({rec['seg_id']}, {rec['system_id']}) has no source for modality {modality!r}"
            )
        if key in out:
            if out[key] != value:
                raise ExportError(f"key {key!r} maps to conflicting values across records")
            continue
        out[key] = value
    if skipped:
        log.warning("skipped %d records without %s sources", skipped, modality)
    return list(out.items())


def run_export(job: ExportJob) -> int:
    """Encode every keyed value and write the container; returns the record count."""
    adapter = get_adapter(job.encoder_id)
    if job.modality not in adapter.modalities:
        raise ExportError(f"encoder {job.encoder_id!r} does not support modality {job.modality!r}")
    records = _read_corpus(job.corpus_path)
    keyed = _keyed_values(records, job.modality, job.on_missing)
    encoded: list[tuple[str, np.ndarray]] = []
    for key, value in keyed:
        frames = adapter.encode(value, job.pooled)
        if frames.shape[1] != adapter.dim:
            raise ExportError(f"adapter emitted dim {frames.shape[1]} for {key!r}, declared {adapter.dim}")
        encoded.append((key, frames))
    write_container(job.output_path, adapter.dim, encoded)
    log.info("wrote %d records (dim %d) to %s", len(encoded), adapter.dim, job.output_path)
    return len(encoded)
