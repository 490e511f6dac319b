"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; thresholds and runtime bounds are asserted, not just reported.
"""

import json
import math
import time

import numpy as np
import pytest

from oracles import edit_distance_matrix, exhaustive_signflip_p, tau_b_pair_counting
from qeme.ablation import ablate, make_model_scorer
from qeme.cli import main
from qeme.corpus import ScoreMatrix, save_segments
from qeme.embeddings import EmbeddingStore, write_embeddings
from qeme.estimator import (
    EstimatorConfig,
    EstimatorModel,
    backward_batch,
    forward,
    forward_batch,
    interaction,
    predict,
    train,
)
from qeme.metrics import PermutationConfig, contrastive_pa, pairwise_p, segment_tau, spa, tau_b, wer
from qeme.probing import ProbeConfig, ProbeDataset, probe_accuracy
from synth import build_corpus


def ok(name: str, detail: str = "") -> None:
    print(f"ACCEPTANCE PASS — {name}" + (f" ({detail})" if detail else ""))


def test_tau_b_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = undefined = 0
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        x = rng.integers(0, 6, size=n).tolist()
        y = rng.integers(0, 6, size=n).tolist()
        expected = tau_b_pair_counting(x, y)
        got = tau_b(x, y)
        if expected is None:
            assert got is None
            undefined += 1
        else:
            assert abs(got - expected) <= 1e-12
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    assert undefined > 0  # ties produced some undefined cases
    ok("tau_b oracle equivalence", f"{checked} vectors, {undefined} undefined, {elapsed:.2f}s")


def test_permutation_test_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    cfg = PermutationConfig(seed=1)
    assert pairwise_p([2.0] * 6, [1.0] * 6, cfg) == 0.03125
    checked = 0
    for n in range(2, 11):
        for _ in range(12):
            a = rng.integers(-4, 8, size=n).astype(float)
            b = rng.integers(-4, 8, size=n).astype(float)
            assert pairwise_p(a, b, cfg) == exhaustive_signflip_p(list(a - b))
            checked += 1
        assert pairwise_p([1.0] * n, [1.0] * n, cfg) == 1.0
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    ok("permutation-test oracle", f"{checked} samples over n=2..10, {elapsed:.2f}s")


def test_spa_identity_and_range():
    rng = np.random.default_rng(5)
    cfg = PermutationConfig(seed=3)
    for _ in range(20):
        cells = [(f"s{i}", f"sys{j}", float(rng.normal())) for i in range(10) for j in range(4)]
        human = ScoreMatrix.from_cells(cells)
        assert spa(human, human, cfg).value == 1.0
    for _ in range(100):
        cells_h = [(f"s{i}", f"sys{j}", float(rng.normal())) for i in range(6) for j in range(3)]
        cells_m = [(seg, sys_id, float(rng.normal())) for seg, sys_id, _ in cells_h]
        value = spa(ScoreMatrix.from_cells(cells_h), ScoreMatrix.from_cells(cells_m), cfg).value
        assert 0.0 <= value <= 1.0
    ok("SPA identity and range")


def test_pa_tie_semantics():
    all_tied = contrastive_pa([(0.5, 0.5)] * 8)
    assert all_tied.value == 0.0
    assert all_tied.n_ties == 8
    assert all_tied.value_excl_ties is None
    half_tied = contrastive_pa([(0.5, 0.5)] * 4 + [(1.0, 0.0)] * 4)
    assert half_tied.value == 0.5
    assert half_tied.value_excl_ties == 1.0
    ok("PA tie semantics")


def test_interaction_and_forward_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = int(rng.integers(1, 33))
        h = rng.normal(size=d)
        s = rng.normal(size=d)
        expected = np.concatenate([h, s, np.abs(h - s), h * s])
        assert np.array_equal(interaction(h, s), expected)

    cfg = EstimatorConfig(dim=1, fusion="text_only", hidden_sizes=(1,), dropout=0.0, seed=0)
    model = EstimatorModel.initialize(cfg, dtype=np.float64)
    model.params["mlp.0.W"] = np.array([[0.3, -0.2, 0.7, 0.4]])
    model.params["mlp.0.b"] = np.array([0.01])
    model.params["mlp.1.W"] = np.array([[1.5]])
    model.params["mlp.1.b"] = np.array([-0.25])
    expected = 1.5 * math.tanh(0.3 * 1.0 - 0.2 * 1.0 + 0.7 * 0.0 + 0.4 * 1.0 + 0.01) - 0.25
    assert abs(forward(model, np.array([1.0]), s_t=np.array([1.0])) - expected) <= 1e-12

    fusions = ["text_only", "speech_only", "avg", "sum", "concat_projection", "additive", "hyp_only"]
    poolings = ["average", "attention"]
    checked = 0
    for k in range(20):
        fusion = fusions[k % len(fusions)]
        pooling = poolings[k % len(poolings)]
        cfg = EstimatorConfig(
            dim=int(rng.integers(2, 9)),
            fusion=fusion,
            pooling=pooling,
            hidden_sizes=(int(rng.integers(2, 17)),),
            dropout=0.0,
            seed=k,
        )
        model = EstimatorModel.initialize(cfg, dtype=np.float64)
        if "attention_query" in model.params:
            model.params["attention_query"] = rng.normal(size=cfg.dim) * 0.3
        batch = 3
        h = rng.normal(size=(batch, cfg.dim))
        s_t = rng.normal(size=(batch, cfg.dim)) if cfg.uses_src_text else None
        frames = (
            [rng.normal(size=(int(rng.integers(1, 4)), cfg.dim)) for _ in range(batch)] if cfg.uses_speech else None
        )
        targets = rng.normal(size=batch)

        def loss():
            preds, cache = forward_batch(model, h, s_t, frames)
            err = preds - targets
            return float(np.mean(err**2)), cache, err

        _, cache, err = loss()
        analytic = backward_batch(model, cache, (2.0 / batch) * err)
        step = 1e-5
        for name, param in model.params.items():
            flat = param.reshape(-1)
            numeric = np.zeros(flat.size)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + step
                up, _, _ = loss()
                flat[idx] = orig - step
                down, _, _ = loss()
                flat[idx] = orig
                numeric[idx] = (up - down) / (2 * step)
            got = analytic[name].reshape(-1)
            rel = np.abs(got - numeric) / (np.abs(got) + np.abs(numeric) + 1e-8)
            assert rel.max() <= 1e-4, f"{fusion}/{pooling} {name}: rel err {rel.max():.2e}"
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    ok("interaction features and forward/gradient correctness", f"{checked} networks, {elapsed:.1f}s")


def split_human(records):
    return ScoreMatrix.from_records(records)


@pytest.fixture(scope="module")
def synthetic_end_to_end():
    """Train the default four-way estimator and a hypothesis-only twin on
    cosine-scored synthetic data; shared by the end-to-end criteria."""
    start = time.perf_counter()
    dim = 16
    train_records, train_sources, _, _ = build_corpus(np.random.default_rng(100), 500, dim, prefix="tr")
    val_records, val_sources, _, _ = build_corpus(np.random.default_rng(101), 100, dim, prefix="va")
    test_records, test_sources, _, _ = build_corpus(np.random.default_rng(102), 100, dim, prefix="te")

    config = EstimatorConfig(dim=dim, fusion="text_only", seed=1)
    model = EstimatorModel.initialize(config)
    best, history = train(model, train_records, train_sources, val_records, val_sources)

    hyp_cfg = EstimatorConfig(dim=dim, fusion="hyp_only", seed=1)
    hyp_best, _ = train(EstimatorModel.initialize(hyp_cfg), train_records, train_sources, val_records, val_sources)
    elapsed = time.perf_counter() - start
    return {
        "best": best,
        "hyp_best": hyp_best,
        "history": history,
        "test_records": test_records,
        "test_sources": test_sources,
        "elapsed": elapsed,
    }


def test_synthetic_end_to_end(synthetic_end_to_end):
    fixture = synthetic_end_to_end
    best, test_records, test_sources = fixture["best"], fixture["test_records"], fixture["test_sources"]
    human = split_human(test_records)
    held_out_tau = segment_tau(human, predict(best, test_records, test_sources)).value
    assert held_out_tau is not None and held_out_tau >= 0.8

    scorer = make_model_scorer(best, test_sources, test_records)
    report = ablate(scorer, test_records, human, "both", seed=9)
    assert report.delta <= -0.5

    hyp_scorer = make_model_scorer(fixture["hyp_best"], test_sources, test_records)
    hyp_report = ablate(hyp_scorer, test_records, human, "both", seed=9)
    assert abs(hyp_report.delta) <= 0.05

    elapsed = fixture["elapsed"]
    assert elapsed < 300.0
    ok(
        "synthetic end-to-end",
        f"held-out tau {held_out_tau:.3f}, delta(both) {report.delta:+.3f}, "
        f"hyp-only delta {hyp_report.delta:+.3f}, train {elapsed:.0f}s",
    )


def test_fusion_dominance_pattern():
    dim = 16
    train_records, train_sources, _, _ = build_corpus(np.random.default_rng(200), 500, dim, prefix="tr")
    val_records, val_sources, _, _ = build_corpus(np.random.default_rng(201), 100, dim, prefix="va")
    test_records, test_sources, _, _ = build_corpus(np.random.default_rng(202), 100, dim, prefix="te")

    config = EstimatorConfig(dim=dim, fusion="sum", seed=2)
    best, _ = train(EstimatorModel.initialize(config), train_records, train_sources, val_records, val_sources)

    human = split_human(test_records)
    scorer = make_model_scorer(best, test_sources, test_records)
    deltas = {mod: ablate(scorer, test_records, human, mod, seed=17).delta for mod in ("text", "audio", "both")}
    assert deltas["both"] < 0
    assert deltas["text"] / deltas["both"] >= 0.9
    assert abs(deltas["audio"]) <= 0.05
    # the dominant modality's solo shuffle sits closer to the full shuffle
    assert abs(deltas["text"] - deltas["both"]) < abs(deltas["audio"] - deltas["both"])
    ok(
        "fusion dominance pattern",
        f"delta text {deltas['text']:+.3f}, audio {deltas['audio']:+.3f}, both {deltas['both']:+.3f}",
    )


def test_probing_contract():
    start = time.perf_counter()
    cfg = ProbeConfig()  # defaults: hidden 256, dropout 0.1, lr 1e-3, batch 256, 3 seeds
    rng = np.random.default_rng(300)
    labels_ids = rng.integers(0, 4, size=2000)
    reps = rng.normal(size=(2000, 16))
    reps[:, 0] = labels_ids
    decodable = probe_accuracy(ProbeDataset(reps, [f"c{i}" for i in labels_ids]), cfg, split_seed=0)
    assert decodable.mean_accuracy >= 0.95
    assert decodable.std_accuracy <= 0.02

    labels_ids = rng.integers(0, 2, size=2000)
    reps = rng.normal(size=(2000, 16))
    independent = probe_accuracy(ProbeDataset(reps, [f"c{i}" for i in labels_ids]), cfg, split_seed=0)
    assert abs(independent.mean_accuracy - independent.majority_baseline) <= 0.1
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    ok(
        "probing contract",
        f"decodable {decodable.mean_accuracy:.3f}±{decodable.std_accuracy:.3f}, "
        f"independent {independent.mean_accuracy:.3f} vs baseline {independent.majority_baseline:.3f}, {elapsed:.0f}s",
    )


def test_wer_oracle():
    rng = np.random.default_rng(400)
    alphabet = ["a", "b", "c", "d", "e"]
    for _ in range(1000):
        ref = [alphabet[i] for i in rng.integers(0, 5, size=rng.integers(1, 13))]
        hyp = [alphabet[i] for i in rng.integers(0, 5, size=rng.integers(0, 13))]
        assert wer(ref, hyp) == edit_distance_matrix(ref, hyp) / len(ref)
    assert wer("a b c".split(), "a x c d".split()) == pytest.approx(2 / 3, abs=1e-15)
    ok("WER oracle equivalence", "1000 random token pairs")


def test_seeded_commands_are_byte_identical(tmp_path):
    dim = 6
    train_records, train_sources, _, _ = build_corpus(np.random.default_rng(500), 8, dim, prefix="tr")
    val_records, val_sources, _, _ = build_corpus(np.random.default_rng(501), 5, dim, prefix="va")
    train_path, val_path = tmp_path / "train.jsonl", tmp_path / "val.jsonl"
    save_segments(train_records, train_path)
    save_segments(val_records, val_path)
    stores = {
        "hyp": (train_sources.hyp, val_sources.hyp),
        "src_text": (train_sources.src_text, val_sources.src_text),
        "src_audio": (train_sources.src_audio, val_sources.src_audio),
    }
    emb = {}
    for name, (a, b) in stores.items():
        merged = EmbeddingStore(dim)
        for store in (a, b):
            for key, arr in store.items():
                merged.add(key, arr)
        emb[name] = tmp_path / f"{name}.sqem"
        write_embeddings(merged, emb[name])
    cfg = tmp_path / "c.cfg"
    cfg.write_text("fusion=sum\nhidden_sizes=16,8\nmax_epochs=2\nlr=1e-3\npatience=5\n")

    emb_flags = ["--hyp-emb", str(emb["hyp"]), "--src-text-emb", str(emb["src_text"]), "--src-audio-emb", str(emb["src_audio"])]

    # identical inputs, distinct out-dirs: manifests must agree, so outputs must too
    train_a, train_b = tmp_path / "a" / "train", tmp_path / "b" / "train"
    for out in (train_a, train_b):
        assert main(["train", "--train", str(train_path), "--val", str(val_path), *emb_flags,
                     "--config", str(cfg), "--seed", "7", "--out-dir", str(out)]) == 0
    ckpt = train_a / "checkpoint.sqec"
    scores_a = tmp_path / "a" / "pred" / "scores.tsv"

    def downstream(base: str) -> dict:
        outs = {}
        pred_out = tmp_path / base / "pred"
        assert main(["predict", "--model", str(ckpt), "--corpus", str(val_path),
                     *emb_flags, "--seed", "7", "--out-dir", str(pred_out)]) == 0
        outs["scores.tsv"] = pred_out / "scores.tsv"
        outs["pred-manifest.json"] = pred_out / "manifest.json"

        eval_out = tmp_path / base / "eval"
        assert main(["evaluate", "--human", str(val_path), "--metric", str(scores_a),
                     "--seed", "7", "--out-dir", str(eval_out)]) == 0
        outs["evaluation_report.json"] = eval_out / "evaluation_report.json"
        outs["evaluation_report.tsv"] = eval_out / "evaluation_report.tsv"
        outs["evaluation_report.png"] = eval_out / "evaluation_report.png"
        outs["eval-manifest.json"] = eval_out / "manifest.json"

        abl_out = tmp_path / base / "abl"
        assert main(["ablate", "--model", str(ckpt), "--corpus", str(val_path),
                     "--modality", "both", *emb_flags, "--seed", "3", "--out-dir", str(abl_out)]) == 0
        outs["ablation.json"] = abl_out / "ablation.json"
        outs["ablation.tsv"] = abl_out / "ablation.tsv"
        outs["abl-manifest.json"] = abl_out / "manifest.json"
        return outs

    first = downstream("a")
    second = downstream("b")
    first["checkpoint.sqec"], second["checkpoint.sqec"] = ckpt, train_b / "checkpoint.sqec"
    first["train-manifest.json"], second["train-manifest.json"] = train_a / "manifest.json", train_b / "manifest.json"
    for name, path in first.items():
        assert path.read_bytes() == second[name].read_bytes(), f"{name} differs between reruns"
    history = json.loads((train_a / "history.json").read_text())
    assert all("wall_time_s" in row for row in history["epochs"])
    ok("seeded-command determinism", f"{len(first)} artifacts byte-identical")
