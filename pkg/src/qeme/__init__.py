"""Quality-estimation meta-evaluation toolkit."""

from .ablation import AblationReport, ShufflePlan, ablate, apply_shuffle, make_model_scorer, make_shuffle
from .corpus import (
    ContrastivePair,
    ScoreMatrix,
    SegmentRecord,
    load_contrastive,
    load_scores,
    load_segments,
    save_scores,
    save_segments,
)
from .embeddings import EmbeddingStore, read_embeddings, write_embeddings
from .errors import FormatError, InputError
from .estimator import (
    EmbeddingSources,
    EstimatorConfig,
    EstimatorModel,
    additive_combine,
    forward,
    fuse,
    interaction,
    load_model,
    pool,
    predict,
    save_model,
    score_pairs,
    train,
)
from .metrics import (
    PaResult,
    PermutationConfig,
    SpaResult,
    TauResult,
    contrastive_pa,
    pairwise_p,
    segment_tau,
    spa,
    tau_b,
    wer,
)
from .probing import ProbeConfig, ProbeDataset, majority_baseline, probe_accuracy, stratified_split, train_probe

__version__ = "0.1.0"
