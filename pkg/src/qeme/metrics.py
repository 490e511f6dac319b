"""Meta-evaluation metrics: Kendall tau-b, soft pairwise accuracy, contrastive
pairwise accuracy, and word error rate.

tau-b handles ties in either vector and is undefined (None) when one side is
fully tied. SPA compares human and metric p-values from a paired two-sided
sign-flip permutation test, exhaustive up to EXHAUSTIVE_LIMIT observations and
seeded Monte Carlo beyond that.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .corpus import ScoreMatrix
from .errors import InputError

EXHAUSTIVE_LIMIT = 12


@dataclass
class TauResult:
    value: float | None
    n_groups_used: int
    n_groups_skipped: int

    def to_json_dict(self) -> dict:
        return {"value": self.value, "n_groups_used": self.n_groups_used, "n_groups_skipped": self.n_groups_skipped}


@dataclass
class SpaResult:
    value: float
    pair_table: list[tuple[str, str, float, float]]

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "pair_table": [
                {"system_a": a, "system_b": b, "p_human": ph, "p_metric": pm} for a, b, ph, pm in self.pair_table
            ],
        }


@dataclass
class PaResult:
    value: float
    n_pairs: int
    n_ties: int
    value_excl_ties: float | None

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "n_pairs": self.n_pairs,
            "n_ties": self.n_ties,
            "value_excl_ties": self.value_excl_ties,
        }


@dataclass
class PermutationConfig:
    """Sign-flip test settings; the seed only matters beyond the exhaustive regime."""

    seed: int
    n_permutations: int = 1000

    def __post_init__(self):
        if self.n_permutations < 1:
            raise InputError(f"n_permutations must be positive, got {self.n_permutations}")


def _as_finite_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def tau_b(x, y) -> float | None:
    """Kendall tau-b over all index pairs; None when either vector is fully tied.

    tau_b = (C - D) / sqrt((C + D + T_x) * (C + D + T_y)) with C/D the
    concordant/discordant pair counts and T_x/T_y the counts of pairs tied
    only in x / only in y.
    """
    xv = _as_finite_vector(x, "x")
    yv = _as_finite_vector(y, "y")
    if len(xv) != len(yv):
        raise InputError(f"length mismatch: {len(xv)} vs {len(yv)}")
    if len(xv) < 2:
        raise InputError(f"need at least 2 observations, got {len(xv)}")
    iu = np.triu_indices(len(xv), k=1)
    sx = np.sign(xv[:, None] - xv[None, :])[iu]
    sy = np.sign(yv[:, None] - yv[None, :])[iu]
    prod = sx * sy
    conc = int(np.count_nonzero(prod > 0))
    disc = int(np.count_nonzero(prod < 0))
    ties_x = int(np.count_nonzero((sx == 0) & (sy != 0)))
    ties_y = int(np.count_nonzero((sy == 0) & (sx != 0)))
    den_x = conc + disc + ties_x
    den_y = conc + disc + ties_y
    if den_x == 0 or den_y == 0:
        return None
    return (conc - disc) / math.sqrt(den_x * den_y)


def segment_tau(human: ScoreMatrix, metric: ScoreMatrix) -> TauResult:
    """Mean tau-b across segment groups (scores across systems per source segment).

    Groups with fewer than 2 cells scored on both sides, or with an undefined
    tau-b, are skipped and counted.
    """
    if set(human.segments) != set(metric.segments) or set(human.systems) != set(metric.systems):
        raise InputError("human and metric matrices must share segments and systems")
    taus = []
    skipped = 0
    for seg in human.segments:
        pairs = [
            (human.get(seg, sys_id), metric.get(seg, sys_id))
            for sys_id in human.systems
            if human.get(seg, sys_id) is not None and metric.get(seg, sys_id) is not None
        ]
        if len(pairs) < 2:
            skipped += 1
            continue
        h_scores, m_scores = zip(*pairs)
        tau = tau_b(h_scores, m_scores)
        if tau is None:
            skipped += 1
        else:
            taus.append(tau)
    if not taus:
        return TauResult(value=None, n_groups_used=0, n_groups_skipped=skipped)
    return TauResult(value=float(np.mean(taus)), n_groups_used=len(taus), n_groups_skipped=skipped)


def pairwise_p(a, b, cfg: PermutationConfig) -> float:
    """Two-sided paired sign-flip permutation p-value for mean(a - b) != 0.

    Exhaustive over all 2^n sign patterns when n <= EXHAUSTIVE_LIMIT, else
    Monte Carlo with cfg.n_permutations seeded draws plus the identity flip.
    """
    av = _as_finite_vector(a, "a")
    bv = _as_finite_vector(b, "b")
    if len(av) != len(bv):
        raise InputError(f"length mismatch: {len(av)} vs {len(bv)}")
    if len(av) < 2:
        raise InputError(f"need at least 2 paired observations, got {len(av)}")
    diff = av - bv
    n = len(diff)
    observed = abs(diff.mean())
    if n <= EXHAUSTIVE_LIMIT:
        # all sign patterns, one per integer bit mask
        masks = np.arange(2**n, dtype=np.uint32)
        bits = (masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1
        signs = 1.0 - 2.0 * bits
        flipped = np.abs((signs * diff).mean(axis=1))
        hits = int(np.count_nonzero(flipped >= observed))
        return hits / len(masks)
    rng = np.random.default_rng(cfg.seed)
    signs = rng.integers(0, 2, size=(cfg.n_permutations, n)) * 2 - 1
    flipped = np.abs((signs * diff).mean(axis=1))
    hits = 1 + int(np.count_nonzero(flipped >= observed))
    return hits / (cfg.n_permutations + 1)


def spa(human: ScoreMatrix, metric: ScoreMatrix, cfg: PermutationConfig) -> SpaResult:
    """Soft pairwise accuracy: mean over system pairs of 1 - |p_human - p_metric|."""
    if set(human.segments) != set(metric.segments) or set(human.systems) != set(metric.systems):
        raise InputError("human and metric matrices must share segments and systems")
    systems = human.systems
    if len(systems) < 2:
        raise InputError(f"system-level comparison needs at least 2 systems, got {len(systems)}")
    pair_table = []
    for sys_a, sys_b in itertools.combinations(systems, 2):
        h_a, h_b, m_a, m_b = [], [], [], []
        for seg in human.segments:
            cells = (human.get(seg, sys_a), human.get(seg, sys_b), metric.get(seg, sys_a), metric.get(seg, sys_b))
            if all(c is not None for c in cells):
                h_a.append(cells[0])
                h_b.append(cells[1])
                m_a.append(cells[2])
                m_b.append(cells[3])
        if len(h_a) < 2:
            raise InputError(f"system pair ({sys_a}, {sys_b}) has {len(h_a)} shared segments, needs at least 2")
        p_human = pairwise_p(h_a, h_b, cfg)
        p_metric = pairwise_p(m_a, m_b, cfg)
        pair_table.append((sys_a, sys_b, p_human, p_metric))
    value = float(np.mean([1.0 - abs(ph - pm) for _, _, ph, pm in pair_table]))
    return SpaResult(value=value, pair_table=pair_table)


def contrastive_pa(scores: list[tuple[float, float]]) -> PaResult:
    """Fraction of pairs where the correct translation outscores the incorrect one.

    Ties (exact float equality) count as incorrect for `value`;
    `value_excl_ties` drops them and is None when every pair is tied.
    """
    if not scores:
        raise InputError("contrastive score list is empty")
    wins = ties = 0
    for plus, minus in scores:
        if not (math.isfinite(plus) and math.isfinite(minus)):
            raise InputError("contrastive scores must be finite")
        if plus > minus:
            wins += 1
        elif plus == minus:
            ties += 1
    n = len(scores)
    excl = wins / (n - ties) if ties < n else None
    return PaResult(value=wins / n, n_pairs=n, n_ties=ties, value_excl_ties=excl)


def wer(ref: list[str], hyp: list[str]) -> float:
    """Word error rate: Levenshtein distance over tokens divided by reference length."""
    if not ref:
        raise InputError("reference token list is empty")
    prev = list(range(len(hyp) + 1))
    for i, ref_tok in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, hyp_tok in enumerate(hyp, start=1):
            cost = 0 if ref_tok == hyp_tok else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[len(hyp)] / len(ref)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization after trimming; no casing or punctuation normalization."""
    return text.strip().split()
