"""Data model and ingestion for QE corpora, contrastive sets, and score tables.

Canonical corpus format is JSONL (one record per line). TSV is accepted both
for full corpora (header row with field names) and for score-only tables
(seg_id, system_id, score).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import InputError

log = logging.getLogger("qeme.corpus")

SEGMENT_FIELDS = ("seg_id", "system_id", "src_text", "mt_text", "human_score", "lang_pair", "audio_key")
PAIR_FIELDS = ("pair_id", "src_text", "audio_key", "mt_correct", "mt_incorrect", "phenomenon", "lang_pair")


@dataclass(frozen=True)
class SegmentRecord:
    """One (source, system, hypothesis) triple with an optional human score."""

    seg_id: str
    system_id: str
    mt_text: str
    lang_pair: str
    src_text: str | None = None
    human_score: float | None = None
    audio_key: str | None = None

    def __post_init__(self):
        if not self.seg_id or not self.system_id:
            raise InputError("seg_id and system_id must be non-empty")
        if not self.mt_text:
            raise InputError(f"record ({self.seg_id}, {self.system_id}): mt_text must be non-empty")
        if self.human_score is not None and not math.isfinite(self.human_score):
            raise InputError(f"record ({self.seg_id}, {self.system_id}): human_score must be finite")


@dataclass(frozen=True)
class ContrastivePair:
    """A source paired with one correct and one incorrect translation."""

    pair_id: str
    mt_correct: str
    mt_incorrect: str
    phenomenon: str
    lang_pair: str
    src_text: str | None = None
    audio_key: str | None = None

    def __post_init__(self):
        if not self.pair_id:
            raise InputError("pair_id must be non-empty")
        if self.mt_correct == self.mt_incorrect:
            raise InputError(f"pair {self.pair_id}: mt_correct and mt_incorrect are identical")
        if self.src_text is None and self.audio_key is None:
            raise InputError(f"pair {self.pair_id}: needs src_text or audio_key")


class ScoreMatrix:
    """Human or metric scores indexed by (seg_id, system_id); missing cells are absent."""

    def __init__(self, segments: list[str], systems: list[str], values: dict[tuple[str, str], float]):
        self.segments = list(segments)
        self.systems = list(systems)
        if len(set(self.segments)) != len(self.segments):
            raise InputError("duplicate seg_id in segment list")
        if len(set(self.systems)) != len(self.systems):
            raise InputError("duplicate system_id in system list")
        seg_set, sys_set = set(self.segments), set(self.systems)
        for (seg, sys_id), score in values.items():
            if seg not in seg_set or sys_id not in sys_set:
                raise InputError(f"score cell ({seg}, {sys_id}) outside the declared segment/system lists")
            if not math.isfinite(score):
                raise InputError(f"score cell ({seg}, {sys_id}) is not finite")
        self.values = dict(values)

    def get(self, seg_id: str, system_id: str) -> float | None:
        return self.values.get((seg_id, system_id))

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ScoreMatrix)
            and self.segments == other.segments
            and self.systems == other.systems
            and self.values == other.values
        )

    @classmethod
    def from_cells(cls, cells: list[tuple[str, str, float]]) -> "ScoreMatrix":
        """Build a matrix from (seg_id, system_id, score) cells, preserving first-seen order."""
        segments: dict[str, None] = {}
        systems: dict[str, None] = {}
        values: dict[tuple[str, str], float] = {}
        for seg, sys_id, score in cells:
            if (seg, sys_id) in values:
                raise InputError(f"duplicate score cell ({seg}, {sys_id})")
            segments.setdefault(seg)
            systems.setdefault(sys_id)
            values[(seg, sys_id)] = float(score)
        return cls(list(segments), list(systems), values)

    @classmethod
    def from_records(cls, records: list[SegmentRecord]) -> "ScoreMatrix":
        """Collect human_score cells from a corpus; records without a score contribute no cell."""
        segments: dict[str, None] = {}
        systems: dict[str, None] = {}
        values: dict[tuple[str, str], float] = {}
        for rec in records:
            segments.setdefault(rec.seg_id)
            systems.setdefault(rec.system_id)
            if rec.human_score is not None:
                values[(rec.seg_id, rec.system_id)] = rec.human_score
        return cls(list(segments), list(systems), values)


def _coerce_optional_str(value, name: str, where: str) -> str | None:
    if value is None:
        return None
    if not isinstance(value, str):
        raise InputError(f"{where}: field {name!r} must be a string")
    return value


def _record_from_mapping(obj: dict, where: str) -> SegmentRecord:
    for name in ("seg_id", "system_id", "mt_text", "lang_pair"):
        if obj.get(name) in (None, ""):
            raise InputError(f"{where}: missing required field {name!r}")
    unknown = set(obj) - set(SEGMENT_FIELDS)
    if unknown:
        raise InputError(f"{where}: unknown fields {sorted(unknown)}")
    score = obj.get("human_score")
    if score is not None:
        try:
            score = float(score)
        except (TypeError, ValueError):
            raise InputError(f"{where}: human_score is not a number") from None
    try:
        return SegmentRecord(
            seg_id=str(obj["seg_id"]),
            system_id=str(obj["system_id"]),
            mt_text=obj["mt_text"],
            lang_pair=obj["lang_pair"],
            src_text=_coerce_optional_str(obj.get("src_text"), "src_text", where),
            human_score=score,
            audio_key=_coerce_optional_str(obj.get("audio_key"), "audio_key", where),
        )
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from None


def _read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8: {exc}") from None
    return text.splitlines()


def _parse_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise InputError(f"{path}:{lineno}: expected a JSON object")
        rows.append((lineno, obj))
    return rows


def _parse_tsv(path: str | Path, required: tuple[str, ...], allowed: tuple[str, ...]) -> list[tuple[int, dict]]:
    lines = _read_lines(path)
    if not lines:
        return []
    header = lines[0].split("\t")
    if not set(required) <= set(header):
        raise InputError(f"{path}:1: TSV header must include columns {list(required)}, got {header}")
    unknown = set(header) - set(allowed)
    if unknown:
        raise InputError(f"{path}:1: unknown TSV columns {sorted(unknown)}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        obj = {k: (v if v != "" else None) for k, v in zip(header, cells)}
        rows.append((lineno, obj))
    return rows


def load_segments(path: str | Path, fmt: str = "jsonl") -> list[SegmentRecord]:
    """Load a corpus of SegmentRecord; rejects duplicates and missing fields by line number."""
    if fmt == "jsonl":
        rows = _parse_jsonl(path)
    elif fmt == "tsv":
        rows = _parse_tsv(path, required=("seg_id", "system_id", "mt_text", "lang_pair"), allowed=SEGMENT_FIELDS)
    else:
        raise InputError(f"unknown corpus format {fmt!r}")
    records: list[SegmentRecord] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, obj in rows:
        rec = _record_from_mapping(obj, f"{path}:{lineno}")
        key = (rec.seg_id, rec.system_id)
        if key in seen:
            raise InputError(
                f"{path}:{lineno}: duplicate (seg_id, system_id) = {key}, first seen on line {seen[key]}"
            )
        seen[key] = lineno
        records.append(rec)
    log.info("loaded %d segment records from %s", len(records), path)
    return records


def save_segments(records: list[SegmentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "seg_id": rec.seg_id,
                "system_id": rec.system_id,
                "mt_text": rec.mt_text,
                "lang_pair": rec.lang_pair,
            }
            if rec.src_text is not None:
                obj["src_text"] = rec.src_text
            if rec.human_score is not None:
                obj["human_score"] = rec.human_score
            if rec.audio_key is not None:
                obj["audio_key"] = rec.audio_key
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_contrastive(path: str | Path) -> list[ContrastivePair]:
    """Load a contrastive pair set from JSONL; phenomenon tags are preserved verbatim."""
    pairs: list[ContrastivePair] = []
    seen: dict[str, int] = {}
    for lineno, obj in _parse_jsonl(path):
        where = f"{path}:{lineno}"
        for name in ("pair_id", "mt_correct", "mt_incorrect", "phenomenon", "lang_pair"):
            if obj.get(name) in (None, ""):
                raise InputError(f"{where}: missing required field {name!r}")
        unknown = set(obj) - set(PAIR_FIELDS)
        if unknown:
            raise InputError(f"{where}: unknown fields {sorted(unknown)}")
        try:
            pair = ContrastivePair(
                pair_id=str(obj["pair_id"]),
                mt_correct=obj["mt_correct"],
                mt_incorrect=obj["mt_incorrect"],
                phenomenon=obj["phenomenon"],
                lang_pair=obj["lang_pair"],
                src_text=_coerce_optional_str(obj.get("src_text"), "src_text", where),
                audio_key=_coerce_optional_str(obj.get("audio_key"), "audio_key", where),
            )
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
        if pair.pair_id in seen:
            raise InputError(f"{where}: duplicate pair_id {pair.pair_id!r}, first seen on line {seen[pair.pair_id]}")
        seen[pair.pair_id] = lineno
        pairs.append(pair)
    log.info("loaded %d contrastive pairs from %s", len(pairs), path)
    return pairs


def load_scores(path: str | Path, fmt: str | None = None) -> ScoreMatrix:
    """Load a score table from TSV (seg_id, system_id, score) or corpus JSONL (human_score cells)."""
    if fmt is None:
        fmt = "tsv" if str(path).endswith(".tsv") else "jsonl"
    if fmt == "tsv":
        rows = _parse_tsv(path, required=("seg_id", "system_id", "score"), allowed=("seg_id", "system_id", "score"))
        cells = []
        for lineno, obj in rows:
            try:
                score = float(obj["score"]) if obj["score"] is not None else math.nan
            except ValueError:
                raise InputError(f"{path}:{lineno}: score is not a number") from None
            if not math.isfinite(score):
                raise InputError(f"{path}:{lineno}: score must be finite")
            if obj["seg_id"] is None or obj["system_id"] is None:
                raise InputError(f"{path}:{lineno}: empty seg_id or system_id")
            cells.append((obj["seg_id"], obj["system_id"], score))
        try:
            return ScoreMatrix.from_cells(cells)
        except InputError as exc:
            raise InputError(f"{path}: {exc}") from None
    if fmt == "jsonl":
        return ScoreMatrix.from_records(load_segments(path, fmt="jsonl"))
    raise InputError(f"unknown score table format {fmt!r}")


def save_scores(matrix: ScoreMatrix, path: str | Path) -> None:
    """Write a score table as TSV in matrix order, skipping absent cells."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seg_id\tsystem_id\tscore\n")
        for seg in matrix.segments:
            for sys_id in matrix.systems:
                score = matrix.get(seg, sys_id)
                if score is not None:
                    fh.write(f"{seg}\t{sys_id}\t{score!r}\n")


def shuffle_source_fields(record: SegmentRecord, src_text=..., audio_key=...) -> SegmentRecord:
    """Return a copy of the record with replaced source fields; everything else untouched."""
    kwargs = {}
    if src_text is not ...:
        kwargs["src_text"] = src_text
    if audio_key is not ...:
        kwargs["audio_key"] = audio_key
    return replace(record, **kwargs)
