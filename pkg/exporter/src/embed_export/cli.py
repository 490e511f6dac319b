"""Command-line exporter: encode a corpus into an embedding container."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .adapters import list_families
from .container import ExportError
from .export import ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Run a registered encoder over corpus records and write an embedding container.",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSONL")
    parser.add_argument("--encoder", required=True, help="encoder id, <family>-<dim> (e.g. hash-text-256)")
    parser.add_argument("--modality", required=True, choices=("text", "audio", "hyp"))
    parser.add_argument("--out", required=True, help="output container path")
    parser.add_argument("--pooled", action="store_true", help="emit frames=1 via encoder-native pooling")
    parser.add_argument("--on-missing", choices=("abort", "skip"), default="abort",
                        help="what to do when a record lacks the requested source")
    parser.add_argument("--list-encoders", action="store_true", help="print registered encoder families and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EMBED_EXPORT_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    if args.list_encoders:
        print("\n".join(list_families()))
        return 0
    job = ExportJob(
        corpus_path=args.corpus,
        encoder_id=args.encoder,
        modality=args.modality,
        output_path=args.out,
        pooled=args.pooled,
        on_missing=args.on_missing,
    )
    try:
        count = run_export(job)
    except ExportError as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
