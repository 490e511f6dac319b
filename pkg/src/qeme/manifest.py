"""Run manifests and plain-text key=value config files.

A manifest pins everything a rerun needs: the command, the effective config,
the seeds, and content digests of every input file. Identical manifests imply
identical primary outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError

TOOL_VERSION = "0.1.0"


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list[int]
    input_digests: dict[str, str]
    tool_version: str = TOOL_VERSION

    def to_json_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "input_digests": self.input_digests,
            "tool_version": self.tool_version,
        }


def sha256_file(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def build_manifest(command: str, config: dict, seeds: list[int], input_paths: list[str | Path]) -> RunManifest:
    digests = {str(p): sha256_file(p) for p in sorted(input_paths, key=str)}
    return RunManifest(command=command, config=dict(config), seeds=[int(s) for s in seeds], input_digests=digests)


def write_json(obj: dict, path: str | Path) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse KEY=VALUE lines; blank lines and '#' comments are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"{path}:{lineno}: expected KEY=VALUE, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise InputError(f"{path}:{lineno}: empty config key")
        if key in out:
            raise InputError(f"{path}:{lineno}: duplicate config key {key!r}")
        out[key] = value.strip()
    return out
