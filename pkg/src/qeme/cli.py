"""Command-line interface.

Subcommands: evaluate, train, predict, probe, ablate, report. Every command
takes --seed, --config, and --out-dir, writes exactly one manifest.json, and
routes all randomness through the seed. Exit codes: 0 success, 2 input error,
64 usage error. QEME_LOG sets the log level (and nothing else).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import ablation as ablation_mod
from . import estimator as estimator_mod
from . import probing as probing_mod
from . import report as report_mod
from .corpus import ScoreMatrix, load_contrastive, load_scores, load_segments, save_scores
from .embeddings import read_embeddings
from .errors import InputError
from .manifest import build_manifest, parse_config_file, write_json
from .metrics import PermutationConfig, contrastive_pa, segment_tau, spa

log = logging.getLogger("qeme")

USAGE_ERROR = 64
INPUT_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for all randomness in this command (default: config-file seed, else 0)")
    parser.add_argument("--config", default=None, help="plain-text key=value config file")
    parser.add_argument("--out-dir", default=".", help="directory for outputs and the run manifest")
    parser.add_argument("--jobs", type=int, default=1, help="bound on internal parallelism; never affects outputs")


def _resolve_seed(args, fallback: int | None = None) -> int:
    if args.seed is not None:
        return args.seed
    return 0 if fallback is None else fallback


def build_parser() -> _Parser:
    parser = _Parser(prog="qeme", description="Quality-estimation meta-evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evaluate", help="segment/system meta-evaluation or contrastive accuracy")
    p.add_argument("--human", help="human score table (TSV or corpus JSONL)")
    p.add_argument("--metric", help="metric score table (TSV or corpus JSONL)")
    p.add_argument("--level", choices=("segment", "system", "both"), default="both")
    p.add_argument("--contrastive", help="contrastive pair set (JSONL)")
    p.add_argument("--scores", help="score table for the contrastive set (system ids correct/incorrect)")
    _add_common(p)

    p = sub.add_parser("train", help="train the estimator on a corpus with human scores")
    p.add_argument("--train", required=True, dest="train_path", help="training corpus (JSONL)")
    p.add_argument("--val", required=True, help="validation corpus (JSONL)")
    p.add_argument("--hyp-emb", required=True, help="hypothesis embedding container")
    p.add_argument("--src-text-emb", help="source-text embedding container")
    p.add_argument("--src-audio-emb", help="source-speech embedding container")
    _add_common(p)

    p = sub.add_parser("predict", help="score a corpus or contrastive set with a trained model")
    p.add_argument("--model", required=True, help="estimator checkpoint")
    p.add_argument("--corpus", help="corpus to score (JSONL)")
    p.add_argument("--contrastive", help="contrastive set to score (JSONL)")
    p.add_argument("--hyp-emb", required=True)
    p.add_argument("--src-text-emb")
    p.add_argument("--src-audio-emb")
    _add_common(p)

    p = sub.add_parser("probe", help="train probing classifiers on frozen representations")
    p.add_argument("--reps", required=True, help="representation embedding container")
    p.add_argument("--labels", required=True, help="TSV with columns key, label")
    p.add_argument("--feature", default=None, help="feature name for the report row (default: labels file stem)")
    _add_common(p)

    p = sub.add_parser("ablate", help="measure tau drop under mismatched sources")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, help="corpus with human scores (JSONL)")
    p.add_argument("--modality", choices=ablation_mod.MODALITIES, required=True)
    p.add_argument("--hyp-emb", required=True)
    p.add_argument("--src-text-emb")
    p.add_argument("--src-audio-emb")
    p.add_argument("--name", default=None, help="model name in the report (default: checkpoint stem)")
    _add_common(p)

    p = sub.add_parser("report", help="render result JSON into TSV tables and figures")
    p.add_argument("--probe", nargs="*", default=[], help="probe result JSON files (merged into one table)")
    p.add_argument("--ablation", nargs="*", default=[], help="ablation report JSON files (merged into one table)")
    p.add_argument("--evaluation", nargs="*", default=[], help="evaluation report JSON files")
    _add_common(p)
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> dict[str, str]:
    return parse_config_file(args.config) if args.config else {}


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc.msg}") from None


def _sources_from_args(args) -> tuple[estimator_mod.EmbeddingSources, list[str]]:
    paths = [args.hyp_emb]
    hyp = read_embeddings(args.hyp_emb)
    src_text = src_audio = None
    if args.src_text_emb:
        src_text = read_embeddings(args.src_text_emb)
        paths.append(args.src_text_emb)
    if args.src_audio_emb:
        src_audio = read_embeddings(args.src_audio_emb)
        paths.append(args.src_audio_emb)
    return estimator_mod.EmbeddingSources(hyp=hyp, src_text=src_text, src_audio=src_audio), paths


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    cfg_map = _load_config(args)
    n_permutations = int(cfg_map.pop("n_permutations", 1000))
    if cfg_map:
        raise InputError(f"unknown evaluate config keys {sorted(cfg_map)}")
    seed = _resolve_seed(args)
    report: dict = {}
    inputs = [args.config] if args.config else []
    manifest_cfg: dict = {"n_permutations": n_permutations}

    contrastive_mode = bool(args.contrastive or args.scores)
    correlation_mode = bool(args.human or args.metric)
    if contrastive_mode == correlation_mode:
        raise InputError("provide either --human/--metric or --contrastive/--scores")

    if correlation_mode:
        if not (args.human and args.metric):
            raise InputError("correlation evaluation needs both --human and --metric")
        human = load_scores(args.human)
        metric = load_scores(args.metric)
        inputs += [args.human, args.metric]
        manifest_cfg["level"] = args.level
        if args.level in ("segment", "both"):
            report["segment_tau"] = segment_tau(human, metric).to_json_dict()
        if args.level in ("system", "both"):
            perm_cfg = PermutationConfig(seed=seed, n_permutations=n_permutations)
            report["spa"] = spa(human, metric, perm_cfg).to_json_dict()
    else:
        if not (args.contrastive and args.scores):
            raise InputError("contrastive evaluation needs both --contrastive and --scores")
        pairs = load_contrastive(args.contrastive)
        scores = load_scores(args.scores)
        inputs += [args.contrastive, args.scores]
        paired = []
        missing = []
        for pair in pairs:
            plus = scores.get(pair.pair_id, "correct")
            minus = scores.get(pair.pair_id, "incorrect")
            if plus is None or minus is None:
                missing.append(pair.pair_id)
            else:
                paired.append((plus, minus))
        if missing:
            raise InputError(f"score table lacks correct/incorrect cells for pairs: {missing[:5]}")
        report["contrastive_pa"] = contrastive_pa(paired).to_json_dict()
        by_phenomenon: dict[str, list] = {}
        for pair, cell in zip(pairs, paired):
            by_phenomenon.setdefault(pair.phenomenon, []).append(cell)
        report["contrastive_pa_by_phenomenon"] = {
            name: contrastive_pa(cells).to_json_dict() for name, cells in sorted(by_phenomenon.items())
        }

    write_json(report, out / "evaluation_report.json")
    report_mod.render_evaluation_report(report, out / "evaluation_report.tsv", out / "evaluation_report.png")
    manifest = build_manifest("evaluate", manifest_cfg, [seed], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    print(json.dumps(report, sort_keys=True)[:2000])
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    cfg_map = _load_config(args)
    sources, emb_paths = _sources_from_args(args)
    train_records = load_segments(args.train_path)
    val_records = load_segments(args.val)
    seed = _resolve_seed(args, int(cfg_map["seed"]) if "seed" in cfg_map else None)
    config = estimator_mod.EstimatorConfig.from_mapping(
        cfg_map, **({"dim": sources.hyp.dim} if "dim" not in cfg_map else {}), seed=seed
    )
    model = estimator_mod.EstimatorModel.initialize(config)
    best, history = estimator_mod.train(model, train_records, sources, val_records, sources)
    estimator_mod.save_model(best, out / "checkpoint.sqec")
    write_json({"epochs": history}, out / "history.json")

    manifest_cfg = asdict(config)
    manifest_cfg["hidden_sizes"] = list(config.hidden_sizes)
    inputs = [args.train_path, args.val, *emb_paths] + ([args.config] if args.config else [])
    manifest = build_manifest("train", manifest_cfg, [seed], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    best_tau = max((h["val_tau"] for h in history if h["val_tau"] is not None), default=None)
    print(f"trained {len(history)} epochs, best val tau {best_tau}")
    return 0


def cmd_predict(args) -> int:
    out = _out_dir(args)
    cfg_map = _load_config(args)
    if cfg_map:
        raise InputError(f"unknown predict config keys {sorted(cfg_map)}")
    model = estimator_mod.load_model(args.model)
    sources, emb_paths = _sources_from_args(args)
    if bool(args.corpus) == bool(args.contrastive):
        raise InputError("provide exactly one of --corpus or --contrastive")
    inputs = [args.model, *emb_paths] + ([args.config] if args.config else [])
    if args.corpus:
        records = load_segments(args.corpus)
        matrix = estimator_mod.predict(model, records, sources, jobs=args.jobs)
        inputs.append(args.corpus)
        n_scored = len(matrix)
    else:
        pairs = load_contrastive(args.contrastive)
        pair_scores = estimator_mod.score_pairs(model, pairs, sources)
        cells = []
        for pair, (plus, minus) in zip(pairs, pair_scores):
            cells.append((pair.pair_id, "correct", plus))
            cells.append((pair.pair_id, "incorrect", minus))
        matrix = ScoreMatrix.from_cells(cells)
        inputs.append(args.contrastive)
        n_scored = len(matrix)
    save_scores(matrix, out / "scores.tsv")
    manifest = build_manifest("predict", {"model_kind": "qe-estimator"}, [_resolve_seed(args)], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    print(f"scored {n_scored} cells -> {out / 'scores.tsv'}")
    return 0


def _load_probe_dataset(reps_path: str, labels_path: str) -> probing_mod.ProbeDataset:
    store = read_embeddings(reps_path)
    try:
        lines = Path(labels_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {labels_path}: {exc}") from None
    if not lines or lines[0].split("\t") != ["key", "label"]:
        raise InputError(f"{labels_path}:1: expected TSV header 'key\\tlabel'")
    keys, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 2 or not cells[0] or not cells[1]:
            raise InputError(f"{labels_path}:{lineno}: expected 'key\\tlabel'")
        keys.append(cells[0])
        labels.append(cells[1])
    missing = [k for k in keys if k not in store]
    if missing:
        raise InputError(f"labels reference keys missing from the container: {missing[:5]}")
    # frame-level entries are mean-pooled so every row is a fixed-size vector
    rows = [store.get(k).mean(axis=0) for k in keys]
    return probing_mod.ProbeDataset(np.stack(rows), labels)


def cmd_probe(args) -> int:
    out = _out_dir(args)
    cfg_map = _load_config(args)
    split_ratio = float(cfg_map.pop("split_ratio", 0.8))
    cfg = probing_mod.ProbeConfig.from_mapping(cfg_map)
    dataset = _load_probe_dataset(args.reps, args.labels)
    split_seed = _resolve_seed(args)
    result = probing_mod.probe_accuracy(dataset, cfg, split_ratio=split_ratio, split_seed=split_seed)
    feature = args.feature or Path(args.labels).stem
    row = {"feature": feature, **result.to_json_dict()}
    write_json({"rows": [row]}, out / "probe_results.json")

    manifest_cfg = {**asdict(cfg), "seeds": list(cfg.seeds), "split_ratio": split_ratio, "feature": feature}
    inputs = [args.reps, args.labels] + ([args.config] if args.config else [])
    manifest = build_manifest("probe", manifest_cfg, [split_seed, *cfg.seeds], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    print(
        f"feature {feature}: accuracy {result.mean_accuracy:.4f} +/- {result.std_accuracy:.4f} "
        f"(baseline {result.majority_baseline:.4f})"
    )
    return 0


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    cfg_map = _load_config(args)
    if cfg_map:
        raise InputError(f"unknown ablate config keys {sorted(cfg_map)}")
    model = estimator_mod.load_model(args.model)
    sources, emb_paths = _sources_from_args(args)
    records = load_segments(args.corpus)
    human = ScoreMatrix.from_records(records)
    if not human.values:
        raise InputError("ablation corpus has no human scores")
    scorer = ablation_mod.make_model_scorer(model, sources, records)
    seed = _resolve_seed(args)
    report = ablation_mod.ablate(scorer, records, human, args.modality, seed)
    name = args.name or Path(args.model).stem
    payload = {"model": name, **report.to_json_dict()}
    write_json(payload, out / "ablation.json")
    report_mod.write_tsv(
        out / "ablation.tsv",
        ["model", "tau_real", f"delta_{args.modality}"],
        [[name, report.tau_real, report.delta]],
    )
    inputs = [args.model, args.corpus, *emb_paths] + ([args.config] if args.config else [])
    manifest = build_manifest("ablate", {"modality": args.modality, "model": name}, [seed], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    print(f"tau real {report.tau_real:.4f}, shuffled {report.tau_shuffled:.4f}, delta {report.delta:+.4f}")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    if not (args.probe or args.ablation or args.evaluation):
        raise InputError("nothing to render: pass --probe/--ablation/--evaluation JSON files")
    inputs = []
    if args.probe:
        rows = []
        for path in args.probe:
            rows.extend(_load_json(path).get("rows", []))
            inputs.append(path)
        report_mod.render_probe_report(rows, out / "probe_report.tsv", out / "probe_report.png")
    if args.ablation:
        merged: dict[str, dict] = {}
        for path in args.ablation:
            payload = _load_json(path)
            for key in ("model", "tau_real", "delta", "modality"):
                if key not in payload:
                    raise InputError(f"{path}: not an ablation report (missing {key!r})")
            row = merged.setdefault(payload["model"], {"model": payload["model"], "tau_real": payload["tau_real"], "deltas": {}})
            row["deltas"][payload["modality"]] = payload["delta"]
            inputs.append(path)
        report_mod.render_ablation_report(list(merged.values()), out / "ablation_report.tsv", out / "ablation_report.png")
    for path in args.evaluation:
        stem = Path(path).stem
        report_mod.render_evaluation_report(_load_json(path), out / f"{stem}.tsv", out / f"{stem}.png")
        inputs.append(path)
    manifest = build_manifest("report", {}, [_resolve_seed(args)], inputs)
    write_json(manifest.to_json_dict(), out / "manifest.json")
    print(f"rendered reports into {out}")
    return 0


_COMMANDS = {
    "evaluate": cmd_evaluate,
    "train": cmd_train,
    "predict": cmd_predict,
    "probe": cmd_probe,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("QEME_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"qeme {args.command}: error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
