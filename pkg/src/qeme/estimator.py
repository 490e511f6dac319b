"""Embedding-based quality estimator: pooling, source fusion, four-way
interaction features, and an MLP regression head, trained with AdamW.

Everything is plain numpy with hand-written backpropagation so that training
is bit-deterministic per seed and the analytic gradients can be checked
against finite differences.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .corpus import ContrastivePair, ScoreMatrix, SegmentRecord
from .embeddings import EmbeddingStore
from .errors import InputError
from .metrics import segment_tau

FUSIONS = ("text_only", "speech_only", "avg", "sum", "concat_projection", "additive", "hyp_only")
POOLINGS = ("average", "attention")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class EstimatorError(InputError):
    pass


@dataclass
class EstimatorConfig:
    dim: int
    fusion: str = "text_only"
    pooling: str = "average"
    hidden_sizes: tuple[int, ...] = (2048, 1024)
    dropout: float = 0.1
    loss: str = "mse"
    lr: float = 1.5e-5
    grad_clip: float = 1.0
    effective_batch: int = 16
    max_epochs: int = 20
    patience: int = 2
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.dim < 1:
            raise EstimatorError(f"dim must be positive, got {self.dim}")
        if self.fusion not in FUSIONS:
            raise EstimatorError(f"unknown fusion {self.fusion!r}, expected one of {FUSIONS}")
        if self.pooling not in POOLINGS:
            raise EstimatorError(f"unknown pooling {self.pooling!r}, expected one of {POOLINGS}")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise EstimatorError("hidden_sizes must be a non-empty list of positive integers")
        if not 0.0 <= self.dropout < 1.0:
            raise EstimatorError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.loss != "mse":
            raise EstimatorError(f"unsupported loss {self.loss!r}")
        if self.lr <= 0 or self.grad_clip <= 0:
            raise EstimatorError("lr and grad_clip must be positive")
        if self.effective_batch < 1 or self.max_epochs < 1:
            raise EstimatorError("effective_batch and max_epochs must be positive")
        if self.patience < 0:
            raise EstimatorError("patience must be non-negative")
        if self.weight_decay < 0:
            raise EstimatorError("weight_decay must be non-negative")

    @property
    def uses_speech(self) -> bool:
        return self.fusion in ("speech_only", "avg", "sum", "concat_projection", "additive")

    @property
    def uses_src_text(self) -> bool:
        return self.fusion in ("text_only", "avg", "sum", "concat_projection")

    @property
    def mlp_input_dim(self) -> int:
        return self.dim if self.fusion in ("additive", "hyp_only") else 4 * self.dim

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], **overrides) -> "EstimatorConfig":
        """Build a config from key=value strings (e.g. a parsed config file)."""
        kwargs: dict = {}
        known = cls.__dataclass_fields__
        for key, raw in mapping.items():
            if key not in known:
                raise EstimatorError(f"unknown estimator config key {key!r}")
            if key == "hidden_sizes":
                kwargs[key] = tuple(int(p) for p in str(raw).replace(",", " ").split())
            elif key in ("fusion", "pooling", "loss"):
                kwargs[key] = str(raw)
            elif key in ("dim", "effective_batch", "max_epochs", "patience", "seed"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        kwargs.update(overrides)
        if "dim" not in kwargs:
            raise EstimatorError("estimator config needs dim")
        return cls(**kwargs)


def param_shapes(config: EstimatorConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape table, in canonical (checkpoint) order."""
    d = config.dim
    shapes: dict[str, tuple[int, ...]] = {}
    if config.uses_speech:
        shapes["speech_projection.W"] = (d, d)
        shapes["speech_projection.b"] = (d,)
    if config.pooling == "attention":
        shapes["attention_query"] = (d,)
    if config.fusion == "concat_projection":
        shapes["fusion_projection.W"] = (d, 2 * d)
        shapes["fusion_projection.b"] = (d,)
    sizes = [config.mlp_input_dim, *config.hidden_sizes, 1]
    for i in range(len(sizes) - 1):
        shapes[f"mlp.{i}.W"] = (sizes[i + 1], sizes[i])
        shapes[f"mlp.{i}.b"] = (sizes[i + 1],)
    return shapes


class EstimatorModel:
    """Parameter container; `params` maps names to float arrays in a fixed order."""

    def __init__(self, config: EstimatorConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        for name, arr in params.items():
            if not np.all(np.isfinite(arr)):
                raise EstimatorError(f"parameter {name!r} contains non-finite values")

    @classmethod
    def initialize(cls, config: EstimatorConfig, dtype=np.float32) -> "EstimatorModel":
        """Seeded init: affine weights uniform at 1/sqrt(fan-in), biases and attention query zero."""
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[0])
        params: dict[str, np.ndarray] = {}
        for name, shape in param_shapes(config).items():
            if name.endswith(".W"):
                limit = 1.0 / np.sqrt(shape[1])
                params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        return cls(config, params)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def n_mlp_layers(self) -> int:
        return len(self.config.hidden_sizes) + 1

    def copy(self) -> "EstimatorModel":
        return EstimatorModel(self.config, {k: v.copy() for k, v in self.params.items()})


def pool(frames, mode: str, query=None) -> np.ndarray:
    """Aggregate (m, d) frames to a d-vector: columnwise mean, or softmax-attention
    with logits frames @ query / sqrt(d)."""
    arr = np.asarray(frames)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise EstimatorError("pool expects a (frames, dim) matrix with frames >= 1")
    if mode == "average":
        return arr.mean(axis=0)
    if mode == "attention":
        if query is None:
            raise EstimatorError("attention pooling requires a query vector")
        weights = _attention_weights(arr, np.asarray(query))
        return weights @ arr
    raise EstimatorError(f"unknown pooling mode {mode!r}")


def _attention_weights(frames: np.ndarray, query: np.ndarray) -> np.ndarray:
    if query.shape != (frames.shape[1],):
        raise EstimatorError(f"attention query shape {query.shape} does not match frame dim {frames.shape[1]}")
    logits = frames @ query / np.sqrt(frames.shape[1]).astype(frames.dtype)
    logits = logits - logits.max()
    expl = np.exp(logits)
    return expl / expl.sum()


def fuse(s_t, s_a, model: EstimatorModel) -> np.ndarray:
    """Combine source-text and source-speech vectors per the model's fusion strategy.

    Unimodal modes pass their single source through; `s_a` is expected to be
    already projected and pooled.
    """
    mode = model.config.fusion
    if mode in ("additive", "hyp_only"):
        raise EstimatorError(f"fusion {mode!r} does not produce a fused source vector")
    if mode == "text_only":
        if s_t is None:
            raise EstimatorError("text_only fusion requires a source-text embedding")
        return np.asarray(s_t)
    if mode == "speech_only":
        if s_a is None:
            raise EstimatorError("speech_only fusion requires a speech embedding")
        return np.asarray(s_a)
    if s_t is None or s_a is None:
        raise EstimatorError(f"{mode} fusion requires both source-text and speech embeddings")
    s_t = np.asarray(s_t)
    s_a = np.asarray(s_a)
    if s_t.shape != s_a.shape:
        raise EstimatorError(f"fusion shape mismatch: {s_t.shape} vs {s_a.shape}")
    if mode == "avg":
        return (s_t + s_a) / 2
    if mode == "sum":
        return s_t + s_a
    weight = model.params["fusion_projection.W"]
    bias = model.params["fusion_projection.b"]
    return weight @ np.concatenate([s_t, s_a]) + bias


def interaction(h, s) -> np.ndarray:
    """Four-way interaction features [h; s; |h - s|; h * s] in exactly this block order."""
    h = np.asarray(h)
    s = np.asarray(s)
    if h.shape != s.shape:
        raise EstimatorError(f"interaction dimension mismatch: {h.shape} vs {s.shape}")
    return np.concatenate([h, s, np.abs(h - s), h * s], axis=-1)


def additive_combine(h, s_a) -> np.ndarray:
    """Add the projected speech embedding to the hypothesis embedding (d-width head input)."""
    h = np.asarray(h)
    s_a = np.asarray(s_a)
    if h.shape != s_a.shape:
        raise EstimatorError(f"additive_combine dimension mismatch: {h.shape} vs {s_a.shape}")
    return h + s_a


def _check_finite(stage: str, *arrays) -> None:
    for arr in arrays:
        if arr is not None and not np.all(np.isfinite(arr)):
            raise EstimatorError(f"non-finite values produced at stage {stage!r}")


class _BatchCache:
    """Intermediate activations of one forward pass, for backprop."""

    __slots__ = ("h", "s_t", "frames", "proj_frames", "attn", "s_a", "fused", "head_in", "zs", "acts", "masks")

    def __init__(self):
        self.frames = []
        self.proj_frames = []
        self.attn = []
        self.zs = []
        self.acts = []
        self.masks = []


def forward_batch(model, h_mat, s_t_mat=None, frame_list=None, train=False, dropout_rng=None):
    """Run the full pipeline on a batch; returns (predictions, cache).

    h_mat: (B, d) hypothesis embeddings; s_t_mat: (B, d) source-text embeddings
    or None; frame_list: per-record (m_i, d) speech frame matrices or None.
    """
    cfg = model.config
    dtype = model.dtype
    cache = _BatchCache()
    h_mat = np.asarray(h_mat, dtype=dtype)
    batch = h_mat.shape[0]
    if h_mat.ndim != 2 or h_mat.shape[1] != cfg.dim:
        raise EstimatorError(f"hypothesis batch must be (B, {cfg.dim}), got {h_mat.shape}")
    _check_finite("input", h_mat, s_t_mat)
    cache.h = h_mat

    s_a_mat = None
    if cfg.uses_speech:
        if frame_list is None or len(frame_list) != batch:
            raise EstimatorError("this fusion mode requires speech frames for every record")
        proj_w = model.params["speech_projection.W"]
        proj_b = model.params["speech_projection.b"]
        pooled = np.empty((batch, cfg.dim), dtype=dtype)
        for i, frames in enumerate(frame_list):
            frames = np.asarray(frames, dtype=dtype)
            if frames.ndim != 2 or frames.shape[1] != cfg.dim or frames.shape[0] < 1:
                raise EstimatorError(f"speech frames for record {i} must be (m, {cfg.dim}) with m >= 1")
            _check_finite("input", frames)
            proj = frames @ proj_w.T + proj_b
            _check_finite("speech_projection", proj)
            cache.frames.append(frames)
            cache.proj_frames.append(proj)
            if cfg.pooling == "attention":
                weights = _attention_weights(proj, model.params["attention_query"])
                cache.attn.append(weights)
                pooled[i] = weights @ proj
            else:
                pooled[i] = proj.mean(axis=0)
        _check_finite("pooling", pooled)
        s_a_mat = pooled
    cache.s_a = s_a_mat

    if cfg.uses_src_text:
        if s_t_mat is None:
            raise EstimatorError("this fusion mode requires source-text embeddings")
        s_t_mat = np.asarray(s_t_mat, dtype=dtype)
        if s_t_mat.shape != (batch, cfg.dim):
            raise EstimatorError(f"source-text batch must be (B, {cfg.dim}), got {s_t_mat.shape}")
    cache.s_t = s_t_mat if cfg.uses_src_text else None

    fusion = cfg.fusion
    if fusion == "hyp_only":
        head_in = h_mat
        fused = None
    elif fusion == "additive":
        head_in = h_mat + s_a_mat
        fused = None
    else:
        if fusion == "text_only":
            fused = cache.s_t
        elif fusion == "speech_only":
            fused = s_a_mat
        elif fusion == "avg":
            fused = (cache.s_t + s_a_mat) / 2
        elif fusion == "sum":
            fused = cache.s_t + s_a_mat
        else:  # concat_projection
            stacked = np.concatenate([cache.s_t, s_a_mat], axis=1)
            fused = stacked @ model.params["fusion_projection.W"].T + model.params["fusion_projection.b"]
        _check_finite("fusion", fused)
        head_in = np.concatenate([h_mat, fused, np.abs(h_mat - fused), h_mat * fused], axis=1)
    _check_finite("interaction", head_in)
    cache.fused = fused
    cache.head_in = head_in

    act = head_in
    n_layers = model.n_mlp_layers()
    keep = 1.0 - cfg.dropout
    for layer in range(n_layers):
        weight = model.params[f"mlp.{layer}.W"]
        bias = model.params[f"mlp.{layer}.b"]
        z = act @ weight.T + bias
        _check_finite(f"mlp.{layer}", z)
        cache.zs.append(z)
        if layer < n_layers - 1:
            act = np.tanh(z)
            if train and cfg.dropout > 0.0:
                mask = (dropout_rng.random(act.shape) < keep).astype(dtype) / dtype.type(keep)
                act = act * mask
                cache.masks.append(mask)
            else:
                cache.masks.append(None)
            cache.acts.append(act)
        else:
            act = z
    preds = act[:, 0]
    _check_finite("output", preds)
    return preds, cache


def backward_batch(model, cache, dpred):
    """Gradients of sum_i dpred[i] * pred[i] w.r.t. every parameter."""
    cfg = model.config
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    upstream = np.asarray(dpred, dtype=model.dtype)[:, None]

    n_layers = model.n_mlp_layers()
    for layer in range(n_layers - 1, -1, -1):
        prev_act = cache.acts[layer - 1] if layer > 0 else cache.head_in
        grads[f"mlp.{layer}.W"] += upstream.T @ prev_act
        grads[f"mlp.{layer}.b"] += upstream.sum(axis=0)
        dact = upstream @ model.params[f"mlp.{layer}.W"]
        if layer > 0:
            mask = cache.masks[layer - 1]
            if mask is not None:
                dact = dact * mask
            upstream = dact * (1.0 - np.tanh(cache.zs[layer - 1]) ** 2)
    dhead = dact

    fusion = cfg.fusion
    d = cfg.dim
    if fusion == "hyp_only":
        ds_t = ds_a = None
    elif fusion == "additive":
        ds_a = dhead
        ds_t = None
    else:
        h_mat, fused = cache.h, cache.fused
        sgn = np.sign(h_mat - fused)
        # hypothesis embeddings are inputs, so only the fused-source branch carries gradient
        dfused = dhead[:, d : 2 * d] - sgn * dhead[:, 2 * d : 3 * d] + h_mat * dhead[:, 3 * d :]
        if fusion == "text_only":
            ds_t, ds_a = dfused, None
        elif fusion == "speech_only":
            ds_t, ds_a = None, dfused
        elif fusion == "avg":
            ds_t = ds_a = dfused / 2
        elif fusion == "sum":
            ds_t = ds_a = dfused
        else:  # concat_projection
            stacked = np.concatenate([cache.s_t, cache.s_a], axis=1)
            grads["fusion_projection.W"] += dfused.T @ stacked
            grads["fusion_projection.b"] += dfused.sum(axis=0)
            dstacked = dfused @ model.params["fusion_projection.W"]
            ds_t, ds_a = dstacked[:, :d], dstacked[:, d:]

    if cfg.uses_speech and ds_a is not None:
        proj_w = model.params["speech_projection.W"]
        scale = 1.0 / np.sqrt(d)
        for i, frames in enumerate(cache.frames):
            dpooled = ds_a[i]
            proj = cache.proj_frames[i]
            if cfg.pooling == "attention":
                weights = cache.attn[i]
                dproj = np.outer(weights, dpooled)
                dweights = proj @ dpooled
                dlogits = weights * (dweights - float(weights @ dweights))
                grads["attention_query"] += scale * (proj.T @ dlogits)
                dproj += scale * np.outer(dlogits, model.params["attention_query"])
            else:
                dproj = np.repeat(dpooled[None, :] / frames.shape[0], frames.shape[0], axis=0)
            grads["speech_projection.W"] += dproj.T @ frames
            grads["speech_projection.b"] += dproj.sum(axis=0)
    return grads


def forward(model, h_t, s_t=None, s_a_frames=None, train=False, dropout_rng=None) -> float:
    """Score a single record; deterministic in evaluation mode."""
    h = np.asarray(h_t)
    if h.ndim != 1:
        raise EstimatorError("h_t must be a vector")
    s_t_mat = np.asarray(s_t)[None, :] if s_t is not None else None
    frames = [np.asarray(s_a_frames)] if s_a_frames is not None else None
    preds, _ = forward_batch(model, h[None, :], s_t_mat, frames, train=train, dropout_rng=dropout_rng)
    return float(preds[0])


@dataclass
class EmbeddingSources:
    """The embedding stores a model draws from, with the key-join conventions.

    Hypothesis entries are keyed "<seg_id>|<system_id>" (contrastive sets use
    "<pair_id>|correct" / "<pair_id>|incorrect"), source-text entries by
    seg_id, and speech entries by the record's audio_key.
    """

    hyp: EmbeddingStore
    src_text: EmbeddingStore | None = None
    src_audio: EmbeddingStore | None = None


def hyp_key(seg_id: str, system_id: str) -> str:
    return f"{seg_id}|{system_id}"


def _resolve_records(records, sources: EmbeddingSources, config: EstimatorConfig, text_index=None):
    """Map records to (h_mat, s_t_mat, frame_list), collecting every missing key."""
    missing: list[str] = []
    h_rows, s_t_rows, frame_list = [], [], []
    for rec in records:
        key = hyp_key(rec.seg_id, rec.system_id)
        if key not in sources.hyp:
            missing.append(f"hyp:{key}")
        else:
            entry = sources.hyp.get(key)
            if entry.shape[0] != 1:
                raise EstimatorError(f"hypothesis entry {key!r} must have frames == 1, got {entry.shape[0]}")
            h_rows.append(entry[0])
        if config.uses_src_text:
            if sources.src_text is None:
                raise EstimatorError("this fusion mode requires a source-text embedding store")
            tkey = rec.seg_id
            if text_index is not None:
                if rec.src_text is None or rec.src_text not in text_index:
                    missing.append(f"src_text:<{rec.seg_id}>")
                    continue
                tkey = text_index[rec.src_text]
            if tkey not in sources.src_text:
                missing.append(f"src_text:{tkey}")
            else:
                entry = sources.src_text.get(tkey)
                if entry.shape[0] != 1:
                    raise EstimatorError(f"source-text entry {tkey!r} must have frames == 1, got {entry.shape[0]}")
                s_t_rows.append(entry[0])
        if config.uses_speech:
            if sources.src_audio is None:
                raise EstimatorError("this fusion mode requires a speech embedding store")
            if rec.audio_key is None:
                missing.append(f"src_audio:<{rec.seg_id} has no audio_key>")
            elif rec.audio_key not in sources.src_audio:
                missing.append(f"src_audio:{rec.audio_key}")
            else:
                frame_list.append(sources.src_audio.get(rec.audio_key))
    if missing:
        raise EstimatorError("unresolvable embedding keys: " + ", ".join(sorted(set(missing))))
    h_mat = np.stack(h_rows)
    s_t_mat = np.stack(s_t_rows) if config.uses_src_text else None
    frames = frame_list if config.uses_speech else None
    return h_mat, s_t_mat, frames


def predict(model, records, sources: EmbeddingSources, text_index=None, jobs: int = 1) -> ScoreMatrix:
    """Score every record in evaluation mode; output is independent of `jobs`."""
    if not records:
        raise EstimatorError("no records to score")
    h_mat, s_t_mat, frames = _resolve_records(records, sources, model.config, text_index)
    preds = _predict_resolved(model, h_mat, s_t_mat, frames, jobs)
    cells = [(rec.seg_id, rec.system_id, float(p)) for rec, p in zip(records, preds)]
    return ScoreMatrix.from_cells(cells)


def _predict_resolved(model, h_mat, s_t_mat, frames, jobs: int = 1) -> np.ndarray:
    n = h_mat.shape[0]
    chunk = 256
    spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def run(span):
        lo, hi = span
        preds, _ = forward_batch(
            model,
            h_mat[lo:hi],
            s_t_mat[lo:hi] if s_t_mat is not None else None,
            frames[lo:hi] if frames is not None else None,
        )
        return preds

    if jobs > 1 and len(spans) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            parts = list(pool_exec.map(run, spans))
    else:
        parts = [run(span) for span in spans]
    return np.concatenate(parts)


def score_pairs(model, pairs: list[ContrastivePair], sources: EmbeddingSources) -> list[tuple[float, float]]:
    """Score (correct, incorrect) hypotheses of contrastive pairs as pseudo-records."""
    records = []
    for pair in pairs:
        for side, text in (("correct", pair.mt_correct), ("incorrect", pair.mt_incorrect)):
            records.append(
                SegmentRecord(
                    seg_id=pair.pair_id,
                    system_id=side,
                    mt_text=text,
                    lang_pair=pair.lang_pair,
                    src_text=pair.src_text,
                    audio_key=pair.audio_key,
                )
            )
    matrix = predict(model, records, sources)
    return [(matrix.get(p.pair_id, "correct"), matrix.get(p.pair_id, "incorrect")) for p in pairs]


class AdamW:
    """Decoupled weight decay Adam; state arrays match the model's dtype."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - ADAM_BETA1**self.t
        bias2 = 1.0 - ADAM_BETA2**self.t
        for name, param in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
            if self.weight_decay:
                update = update + self.weight_decay * param
            param -= self.lr * update


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= g.dtype.type(scale)
    return float(norm)


class EarlyStopper:
    """Stop when the validation score fails to improve `patience` consecutive times."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.failures = 0

    def update(self, epoch: int, score: float | None) -> tuple[bool, bool]:
        """Returns (improved, should_stop)."""
        if score is not None and score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.failures = 0
            return True, False
        self.failures += 1
        return False, self.failures >= self.patience


def train(
    model: EstimatorModel,
    train_records: list[SegmentRecord],
    train_sources: EmbeddingSources,
    val_records: list[SegmentRecord],
    val_sources: EmbeddingSources,
) -> tuple[EstimatorModel, list[dict]]:
    """Minimize MSE against human scores with AdamW, gradient accumulation to the
    effective batch size, global-norm clipping, and early stopping on validation
    segment tau; returns the best-tau checkpoint and the per-epoch history.
    """
    cfg = model.config
    if not val_records:
        raise EstimatorError("validation set is empty")
    unscored = [r for r in train_records if r.human_score is None]
    if unscored:
        raise EstimatorError(
            f"{len(unscored)} training records lack human_score, first: "
            f"({unscored[0].seg_id}, {unscored[0].system_id})"
        )
    h_mat, s_t_mat, frames = _resolve_records(train_records, train_sources, cfg)
    targets = np.asarray([r.human_score for r in train_records], dtype=model.dtype)
    val_h, val_s_t, val_frames = _resolve_records(val_records, val_sources, cfg)
    val_human = ScoreMatrix.from_records(val_records)
    if not val_human.values:
        raise EstimatorError("validation records lack human scores")

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])

    optimizer = AdamW(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopper(cfg.patience)
    best = model.copy()
    history: list[dict] = []
    n = len(train_records)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.effective_batch):
            idx = order[lo : lo + cfg.effective_batch]
            batch_frames = [frames[i] for i in idx] if frames is not None else None
            preds, cache = forward_batch(
                model,
                h_mat[idx],
                s_t_mat[idx] if s_t_mat is not None else None,
                batch_frames,
                train=True,
                dropout_rng=dropout_rng,
            )
            err = preds - targets[idx]
            loss = float(np.mean(err.astype(np.float64) ** 2))
            if not np.isfinite(loss):
                raise EstimatorError(f"non-finite loss at epoch {epoch}, step {lo // cfg.effective_batch}")
            losses.append(loss)
            grads = backward_batch(model, cache, (2.0 / len(idx)) * err)
            clip_global_norm(grads, cfg.grad_clip)
            optimizer.step(grads)

        val_preds = _predict_resolved(model, val_h, val_s_t, val_frames)
        val_cells = [(r.seg_id, r.system_id, float(p)) for r, p in zip(val_records, val_preds)]
        val_tau = segment_tau(val_human, ScoreMatrix.from_cells(val_cells)).value
        improved, should_stop = stopper.update(epoch, val_tau)
        if improved:
            best = model.copy()
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_tau": val_tau,
                "wall_time_s": time.perf_counter() - t0,
            }
        )
        if should_stop:
            break
    return best, history


def save_model(model: EstimatorModel, path: str | Path) -> None:
    """Persist config and parameters; float32 models round-trip bit-exactly."""
    meta = {"kind": "qe-estimator", "config": asdict(model.config)}
    meta["config"]["hidden_sizes"] = list(model.config.hidden_sizes)
    checkpoint.save_blobs(path, meta, list(model.params.items()))


def load_model(path: str | Path) -> EstimatorModel:
    meta, arrays = checkpoint.load_blobs(path)
    if not isinstance(meta, dict) or meta.get("kind") != "qe-estimator":
        raise EstimatorError(f"{path}: not an estimator checkpoint")
    try:
        config = EstimatorConfig(**{**meta["config"], "hidden_sizes": tuple(meta["config"]["hidden_sizes"])})
    except (KeyError, TypeError) as exc:
        raise EstimatorError(f"{path}: invalid estimator config in checkpoint: {exc}") from None
    expected = param_shapes(config)
    if {name: arr.shape for name, arr in arrays.items()} != expected:
        raise EstimatorError(f"{path}: parameter names/shapes do not match the config architecture")
    return EstimatorModel(config, arrays)
