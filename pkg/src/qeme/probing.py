"""Probing classifiers over frozen representations.

A single-hidden-layer ReLU MLP with dropout is trained per seed on one shared
stratified split; accuracies are reported as mean/std over seeds next to the
majority-class baseline.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InputError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ProbeConfig:
    hidden: int = 256
    dropout: float = 0.1
    lr: float = 1e-3
    batch: int = 256
    epochs: int = 100
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.hidden < 1 or self.batch < 1 or self.epochs < 1:
            raise InputError("hidden, batch, and epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise InputError("lr must be positive")
        if not self.seeds:
            raise InputError("seeds must be non-empty")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], **overrides) -> "ProbeConfig":
        kwargs: dict = {}
        for key, raw in mapping.items():
            if key not in cls.__dataclass_fields__:
                raise InputError(f"unknown probe config key {key!r}")
            if key == "seeds":
                kwargs[key] = tuple(int(p) for p in str(raw).replace(",", " ").split())
            elif key in ("hidden", "batch", "epochs"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        kwargs.update(overrides)
        return cls(**kwargs)


class ProbeDataset:
    """(n, r) representations with one class label per row."""

    def __init__(self, representations, labels: list[str]):
        self.representations = np.asarray(representations, dtype=np.float64)
        if self.representations.ndim != 2:
            raise InputError("representations must be a (n, r) matrix")
        if not np.all(np.isfinite(self.representations)):
            raise InputError("representations contain non-finite values")
        self.labels = [str(lbl) for lbl in labels]
        if len(self.labels) != self.representations.shape[0]:
            raise InputError(
                f"{len(self.labels)} labels for {self.representations.shape[0]} representation rows"
            )
        self.class_set = sorted(set(self.labels))
        if len(self.class_set) < 2:
            raise InputError("need at least 2 distinct classes")
        if len(self.labels) < len(self.class_set):
            raise InputError("need at least as many rows as classes")

    def __len__(self) -> int:
        return len(self.labels)

    def label_ids(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.class_set)}
        return np.asarray([index[lbl] for lbl in self.labels], dtype=np.int64)


def majority_baseline(labels: list[str]) -> float:
    """Frequency of the most common class."""
    if not labels:
        raise InputError("labels are empty")
    return Counter(labels).most_common(1)[0][1] / len(labels)


def stratified_split(labels: list[str], ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic per-class split; both sides keep every class (>= 1 member each)."""
    if not 0.0 < ratio < 1.0:
        raise InputError(f"split ratio must be in (0, 1), got {ratio}")
    labels_arr = np.asarray([str(lbl) for lbl in labels])
    classes = sorted(set(labels_arr.tolist()))
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in classes:
        members = np.flatnonzero(labels_arr == cls)
        if len(members) < 2:
            raise InputError(f"class {cls!r} has only {len(members)} member; stratified split needs >= 2")
        members = rng.permutation(members)
        n_train = min(max(round(ratio * len(members)), 1), len(members) - 1)
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


class ProbeClassifier:
    """Trained probe: hidden ReLU layer + linear logits over the class set."""

    def __init__(self, params: dict[str, np.ndarray], class_set: list[str]):
        self.params = params
        self.class_set = class_set

    def logits(self, representations) -> np.ndarray:
        x = np.asarray(representations, dtype=np.float64)
        hidden = np.maximum(x @ self.params["W1"].T + self.params["b1"], 0.0)
        return hidden @ self.params["W2"].T + self.params["b2"]

    def predict(self, representations) -> list[str]:
        return [self.class_set[i] for i in self.logits(representations).argmax(axis=1)]

    def accuracy(self, representations, labels: list[str]) -> float:
        pred = self.predict(representations)
        return float(np.mean([p == str(t) for p, t in zip(pred, labels)]))


def train_probe(dataset: ProbeDataset, split: tuple[np.ndarray, np.ndarray], cfg: ProbeConfig, seed: int) -> ProbeClassifier:
    """Train one probe with Adam on cross-entropy; deterministic per seed."""
    train_idx, test_idx = split
    all_idx = np.concatenate([train_idx, test_idx])
    if len(np.unique(all_idx)) != len(dataset) or all_idx.min() < 0 or all_idx.max() >= len(dataset):
        raise InputError("split is not an exact partition of the dataset")

    x = dataset.representations[train_idx]
    y = dataset.label_ids()[train_idx]
    n, r = x.shape
    n_classes = len(dataset.class_set)

    seeds = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])

    lim1 = 1.0 / np.sqrt(r)
    lim2 = 1.0 / np.sqrt(cfg.hidden)
    params = {
        "W1": init_rng.uniform(-lim1, lim1, size=(cfg.hidden, r)),
        "b1": np.zeros(cfg.hidden),
        "W2": init_rng.uniform(-lim2, lim2, size=(n_classes, cfg.hidden)),
        "b2": np.zeros(n_classes),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v_) for k, v_ in params.items()}
    t = 0
    keep = 1.0 - cfg.dropout

    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, cfg.batch):
            idx = order[lo : lo + cfg.batch]
            xb, yb = x[idx], y[idx]
            z1 = xb @ params["W1"].T + params["b1"]
            a1 = np.maximum(z1, 0.0)
            if cfg.dropout > 0.0:
                mask = (dropout_rng.random(a1.shape) < keep) / keep
                a1 = a1 * mask
            else:
                mask = None
            logits = a1 @ params["W2"].T + params["b2"]
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            if not np.all(np.isfinite(log_probs)):
                raise InputError("non-finite probe loss")
            probs = np.exp(log_probs)
            dlogits = probs
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            grads = {
                "W2": dlogits.T @ a1,
                "b2": dlogits.sum(axis=0),
            }
            da1 = dlogits @ params["W2"]
            if mask is not None:
                da1 = da1 * mask
            dz1 = da1 * (z1 > 0.0)
            grads["W1"] = dz1.T @ xb
            grads["b1"] = dz1.sum(axis=0)
            t += 1
            bias1 = 1.0 - ADAM_BETA1**t
            bias2 = 1.0 - ADAM_BETA2**t
            for name, param in params.items():
                g = grads[name]
                m[name] = ADAM_BETA1 * m[name] + (1.0 - ADAM_BETA1) * g
                v[name] = ADAM_BETA2 * v[name] + (1.0 - ADAM_BETA2) * g * g
                param -= cfg.lr * (m[name] / bias1) / (np.sqrt(v[name] / bias2) + ADAM_EPS)
    return ProbeClassifier(params, dataset.class_set)


@dataclass
class ProbeResult:
    mean_accuracy: float
    std_accuracy: float
    majority_baseline: float
    per_seed: list[float]
    n_train: int
    n_test: int

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean_accuracy,
            "std": self.std_accuracy,
            "baseline": self.majority_baseline,
            "per_seed": self.per_seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def probe_accuracy(
    dataset: ProbeDataset,
    cfg: ProbeConfig,
    split_ratio: float = 0.8,
    split_seed: int = 0,
) -> ProbeResult:
    """Train one probe per seed on a shared stratified split; report mean/std/baseline."""
    split = stratified_split(dataset.labels, split_ratio, split_seed)
    train_idx, test_idx = split
    test_x = dataset.representations[test_idx]
    test_labels = [dataset.labels[i] for i in test_idx]
    accs = []
    for seed in cfg.seeds:
        probe = train_probe(dataset, split, cfg, seed)
        accs.append(probe.accuracy(test_x, test_labels))
    return ProbeResult(
        mean_accuracy=float(np.mean(accs)),
        std_accuracy=float(np.std(accs)),
        majority_baseline=majority_baseline(dataset.labels),
        per_seed=accs,
        n_train=int(len(train_idx)),
        n_test=int(len(test_idx)),
    )
