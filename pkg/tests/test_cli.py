import json

import numpy as np
import pytest

from qeme.cli import main
from qeme.corpus import save_segments
from qeme.embeddings import EmbeddingStore, write_embeddings
from synth import build_corpus


def merged_store(dim, *stores):
    merged = EmbeddingStore(dim)
    for store in stores:
        for key, arr in store.items():
            merged.add(key, arr)
    return merged


def write_train_val(tmp_path, n_train=10, n_val=6, dim=6):
    """One corpus pair plus shared embedding containers covering both."""
    train_records, train_sources, _, _ = build_corpus(np.random.default_rng(1), n_train, dim, prefix="tr")
    val_records, val_sources, _, _ = build_corpus(np.random.default_rng(2), n_val, dim, prefix="va")
    train_path, val_path = tmp_path / "train.jsonl", tmp_path / "val.jsonl"
    save_segments(train_records, train_path)
    save_segments(val_records, val_path)
    paths = {}
    for name, pair in (
        ("hyp", (train_sources.hyp, val_sources.hyp)),
        ("src_text", (train_sources.src_text, val_sources.src_text)),
        ("src_audio", (train_sources.src_audio, val_sources.src_audio)),
    ):
        path = tmp_path / f"{name}.sqem"
        write_embeddings(merged_store(dim, *pair), path)
        paths[name] = path
    return train_path, val_path, paths


def test_evaluate_correlation(tmp_path):
    human = tmp_path / "h.tsv"
    metric = tmp_path / "m.tsv"
    rows = ["seg_id\tsystem_id\tscore"]
    mrows = ["seg_id\tsystem_id\tscore"]
    rng = np.random.default_rng(0)
    for seg in range(6):
        for sys_id in "ABCD":
            rows.append(f"s{seg}\t{sys_id}\t{rng.normal():.6f}")
            mrows.append(f"s{seg}\t{sys_id}\t{rng.normal():.6f}")
    human.write_text("\n".join(rows) + "\n")
    metric.write_text("\n".join(mrows) + "\n")
    out = tmp_path / "out"
    code = main(["evaluate", "--human", str(human), "--metric", str(metric), "--level", "both", "--out-dir", str(out), "--seed", "3"])
    assert code == 0
    report = json.loads((out / "evaluation_report.json").read_text())
    assert -1.0 <= report["segment_tau"]["value"] <= 1.0
    assert 0.0 <= report["spa"]["value"] <= 1.0
    assert (out / "evaluation_report.tsv").exists()
    assert (out / "evaluation_report.png").exists()
    assert (out / "manifest.json").exists()


def test_evaluate_contrastive(tmp_path):
    pairs_path = tmp_path / "pairs.jsonl"
    lines = []
    for i in range(5):
        lines.append(json.dumps({
            "pair_id": f"p{i}", "mt_correct": "good", "mt_incorrect": "bad",
            "phenomenon": "gender" if i % 2 else "stress", "lang_pair": "en-es", "audio_key": f"au{i}",
        }))
    pairs_path.write_text("\n".join(lines) + "\n")
    scores_path = tmp_path / "scores.tsv"
    rows = ["seg_id\tsystem_id\tscore"]
    for i in range(5):
        rows.append(f"p{i}\tcorrect\t{0.9 if i else 0.5}")
        rows.append(f"p{i}\tincorrect\t0.5")
    scores_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "out"
    code = main(["evaluate", "--contrastive", str(pairs_path), "--scores", str(scores_path), "--out-dir", str(out)])
    assert code == 0
    report = json.loads((out / "evaluation_report.json").read_text())
    assert report["contrastive_pa"]["value"] == 0.8
    assert report["contrastive_pa"]["n_ties"] == 1
    assert set(report["contrastive_pa_by_phenomenon"]) == {"gender", "stress"}


def test_evaluate_malformed_tsv_exits_2(tmp_path, capsys):
    human = tmp_path / "h.tsv"
    human.write_text("seg_id\tsystem_id\tscore\ns1\tA\tnot-a-number\n")
    code = main(["evaluate", "--human", str(human), "--metric", str(human), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert ":2" in capsys.readouterr().err


def test_unknown_flag_exits_64(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--bogus-flag", "x"])
    assert exc.value.code == 64
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_exits_64():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 64


def train_args(tmp_path, corpus_path, val_path, paths, out, seed="7", extra=()):
    cfg = tmp_path / "train.cfg"
    if not cfg.exists():
        cfg.write_text("fusion=sum\nhidden_sizes=16,8\nmax_epochs=2\nlr=1e-3\npatience=5\n")
    return [
        "train", "--train", str(corpus_path), "--val", str(val_path),
        "--hyp-emb", str(paths["hyp"]), "--src-text-emb", str(paths["src_text"]),
        "--src-audio-emb", str(paths["src_audio"]),
        "--config", str(cfg), "--seed", seed, "--out-dir", str(out), *extra,
    ]


def test_train_predict_ablate_report_flow(tmp_path):
    corpus_path, val_path, paths = write_train_val(tmp_path)

    out_train = tmp_path / "run1"
    assert main(train_args(tmp_path, corpus_path, val_path, paths, out_train)) == 0
    ckpt = out_train / "checkpoint.sqec"
    history = json.loads((out_train / "history.json").read_text())
    assert ckpt.exists() and len(history["epochs"]) >= 1
    assert all("wall_time_s" in row for row in history["epochs"])

    out_pred = tmp_path / "pred"
    code = main([
        "predict", "--model", str(ckpt), "--corpus", str(corpus_path),
        "--hyp-emb", str(paths["hyp"]), "--src-text-emb", str(paths["src_text"]),
        "--src-audio-emb", str(paths["src_audio"]), "--out-dir", str(out_pred),
    ])
    assert code == 0
    scores = (out_pred / "scores.tsv").read_text().splitlines()
    assert scores[0] == "seg_id\tsystem_id\tscore"
    assert len(scores) == 1 + 40  # 10 segments x 4 systems

    out_abl = tmp_path / "abl"
    code = main([
        "ablate", "--model", str(ckpt), "--corpus", str(corpus_path), "--modality", "text",
        "--hyp-emb", str(paths["hyp"]), "--src-text-emb", str(paths["src_text"]),
        "--src-audio-emb", str(paths["src_audio"]), "--seed", "3", "--out-dir", str(out_abl),
    ])
    assert code == 0
    ablation = json.loads((out_abl / "ablation.json").read_text())
    assert {"model", "tau_real", "tau_shuffled", "delta", "modality", "seed"} <= set(ablation)

    out_rep = tmp_path / "rep"
    code = main(["report", "--ablation", str(out_abl / "ablation.json"), "--out-dir", str(out_rep)])
    assert code == 0
    assert (out_rep / "ablation_report.tsv").exists()
    assert (out_rep / "ablation_report.png").exists()


def test_train_seed_falls_back_to_config_file(tmp_path):
    corpus_path, val_path, paths = write_train_val(tmp_path, n_train=6, n_val=4)
    cfg = tmp_path / "seeded.cfg"
    cfg.write_text("fusion=sum\nhidden_sizes=8\nmax_epochs=1\nseed=42\n")
    base = ["train", "--train", str(corpus_path), "--val", str(val_path),
            "--hyp-emb", str(paths["hyp"]), "--src-text-emb", str(paths["src_text"]),
            "--src-audio-emb", str(paths["src_audio"]), "--config", str(cfg)]
    assert main(base + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(base + ["--seed", "7", "--out-dir", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seeds"] == [42]
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seeds"] == [7]


def test_train_rerun_is_byte_identical(tmp_path):
    corpus_path, val_path, paths = write_train_val(tmp_path, n_train=8, n_val=5)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(train_args(tmp_path, corpus_path, val_path, paths, out_a)) == 0
    assert main(train_args(tmp_path, corpus_path, val_path, paths, out_b)) == 0
    assert (out_a / "checkpoint.sqec").read_bytes() == (out_b / "checkpoint.sqec").read_bytes()
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()


def test_probe_command(tmp_path):
    rng = np.random.default_rng(6)
    store = EmbeddingStore(8)
    lines = ["key\tlabel"]
    for i in range(120):
        label = i % 2
        vec = rng.normal(size=8).astype(np.float32)
        vec[0] = label * 3.0
        store.add(f"k{i}", vec)
        lines.append(f"k{i}\tc{label}")
    reps = tmp_path / "reps.sqem"
    write_embeddings(store, reps)
    labels = tmp_path / "labels.tsv"
    labels.write_text("\n".join(lines) + "\n")
    cfg = tmp_path / "probe.cfg"
    cfg.write_text("hidden=16\nepochs=60\nbatch=32\nseeds=0,1\n")
    out = tmp_path / "out"
    code = main(["probe", "--reps", str(reps), "--labels", str(labels), "--config", str(cfg), "--out-dir", str(out), "--feature", "parity"])
    assert code == 0
    rows = json.loads((out / "probe_results.json").read_text())["rows"]
    assert rows[0]["feature"] == "parity"
    assert rows[0]["mean"] >= 0.9
    assert rows[0]["baseline"] == pytest.approx(0.5)

    out_rep = tmp_path / "rep"
    assert main(["report", "--probe", str(out / "probe_results.json"), "--out-dir", str(out_rep)]) == 0
    assert (out_rep / "probe_report.png").exists()


def test_predict_contrastive_then_evaluate(tmp_path):
    rng = np.random.default_rng(8)
    dim = 6
    hyp = EmbeddingStore(dim)
    text = EmbeddingStore(dim)
    pair_lines = []
    for i in range(4):
        pid = f"p{i}"
        text.add(pid, rng.normal(size=dim).astype(np.float32))
        hyp.add(f"{pid}|correct", rng.normal(size=dim).astype(np.float32))
        hyp.add(f"{pid}|incorrect", rng.normal(size=dim).astype(np.float32))
        pair_lines.append(json.dumps({
            "pair_id": pid, "mt_correct": "g", "mt_incorrect": "b",
            "phenomenon": "intonation", "lang_pair": "en-de", "src_text": f"s{i}",
        }))
    pairs_path = tmp_path / "pairs.jsonl"
    pairs_path.write_text("\n".join(pair_lines) + "\n")
    hyp_path, text_path = tmp_path / "hyp.sqem", tmp_path / "text.sqem"
    write_embeddings(hyp, hyp_path)
    write_embeddings(text, text_path)

    cfg = tmp_path / "c.cfg"
    cfg.write_text("fusion=text_only\nhidden_sizes=8\nmax_epochs=1\n")
    # an untrained checkpoint is enough to exercise the scoring plumbing
    from qeme.estimator import EstimatorConfig, EstimatorModel, save_model

    ckpt = tmp_path / "m.sqec"
    save_model(EstimatorModel.initialize(EstimatorConfig(dim=dim, fusion="text_only", hidden_sizes=(8,), seed=1)), ckpt)

    out = tmp_path / "pred"
    code = main(["predict", "--model", str(ckpt), "--contrastive", str(pairs_path),
                 "--hyp-emb", str(hyp_path), "--src-text-emb", str(text_path), "--out-dir", str(out)])
    assert code == 0

    out_eval = tmp_path / "eval"
    code = main(["evaluate", "--contrastive", str(pairs_path), "--scores", str(out / "scores.tsv"), "--out-dir", str(out_eval)])
    assert code == 0
    report = json.loads((out_eval / "evaluation_report.json").read_text())
    assert report["contrastive_pa"]["n_pairs"] == 4
