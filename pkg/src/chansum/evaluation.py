"""Semantic summary evaluation: concept IoU, bipartite matching, P/R/F1.

A candidate summary is compared to a reference summary of the same video
by building the bipartite graph whose edge weights are the
intersection-over-union of the two shots' annotated concept sets, taking
a maximum-weight matching, and counting the matched pairs that carry
positive weight. Pairs matched at zero weight share no semantics and are
dropped, so a summary of entirely unrelated shots scores zero.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

BRUTE_FORCE_LIMIT = 8


@dataclass
class MatchReport:
    """Matching outcome for one candidate/reference summary pair."""

    matched_pairs: list  # (candidate_shot, reference_shot, weight), positive weight only
    precision: float
    recall: float
    f1: float


@dataclass
class VideoMetrics:
    video_id: str
    per_query: dict = field(default_factory=dict)  # query key -> MatchReport
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0


@dataclass
class DatasetMetrics:
    videos: list = field(default_factory=list)  # VideoMetrics, in input order
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    def to_dict(self) -> dict:
        return {
            "videos": {
                v.video_id: {
                    "precision": v.precision,
                    "recall": v.recall,
                    "f1": v.f1,
                    "queries": {
                        q: {"precision": r.precision, "recall": r.recall, "f1": r.f1}
                        for q, r in v.per_query.items()
                    },
                }
                for v in self.videos
            },
            "average": {"precision": self.precision, "recall": self.recall, "f1": self.f1},
        }


def concept_iou(a, b) -> float:
    """Intersection-over-union of two concept sets; 0 when both are empty."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def max_weight_matching(weights) -> list[tuple[int, int, float]]:
    """Maximum-weight bipartite matching of a non-negative weight matrix.

    Returns (row, column, weight) triples sorted lexicographically;
    zero-weight pairs are dropped. Solved as a rectangular assignment
    problem, which is deterministic for a given matrix.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"expected a 2-D weight matrix, got shape {w.shape}")
    if w.size == 0:
        return []
    if (w < 0).any():
        raise ValueError("matching weights must be non-negative")
    rows, cols = linear_sum_assignment(w, maximize=True)
    pairs = [(int(i), int(j), float(w[i, j])) for i, j in zip(rows, cols) if w[i, j] > 0]
    pairs.sort()
    return pairs


def brute_force_matching(weights) -> tuple[list[tuple[int, int, float]], float]:
    """Exhaustive-permutation reference for small matrices.

    Returns the best positive-weight pair list and the optimal total
    weight, enumerated over every injection of the smaller side into the
    larger.
    """
    w = np.asarray(weights, dtype=np.float64)
    p, q = w.shape
    if max(p, q) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force matching is limited to {BRUTE_FORCE_LIMIT} per side")
    transposed = p > q
    if transposed:
        w = w.T
        p, q = q, p
    best_total, best_pairs = -1.0, []
    for cols in itertools.permutations(range(q), p):
        total = 0.0
        for i in range(p):
            total += w[i, cols[i]]
        if total > best_total:
            best_total = total
            best_pairs = [(i, cols[i]) for i in range(p) if w[i, cols[i]] > 0]
    if transposed:
        best_pairs = [(j, i) for i, j in best_pairs]
    pairs = [(i, j, float(weights[i][j])) for i, j in sorted(best_pairs)]
    return pairs, best_total


def evaluate_summary(candidate, reference, shot_concepts) -> MatchReport:
    """Match a candidate shot-index set against a reference one.

    ``shot_concepts`` maps shot index -> concept set (list indexing works
    too). Precision is matched pairs over candidate size, recall over
    reference size, each 0 when its denominator is 0.
    """
    cand = sorted(set(int(i) for i in candidate))
    ref = sorted(set(int(i) for i in reference))
    weights = np.zeros((len(cand), len(ref)))
    for a, ci in enumerate(cand):
        for b, rj in enumerate(ref):
            weights[a, b] = concept_iou(shot_concepts[ci], shot_concepts[rj])
    pairs = max_weight_matching(weights) if weights.size else []
    matched = [(cand[i], ref[j], w) for i, j, w in pairs]
    n = len(matched)
    precision = n / len(cand) if cand else 0.0
    recall = n / len(ref) if ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MatchReport(matched, precision, recall, f1)


def evaluate_dataset(candidates, references, annotations) -> DatasetMetrics:
    """Aggregate matching metrics per video, then across videos.

    ``candidates`` and ``references`` map video id -> {query key -> shot
    index list}; ``annotations`` maps video id -> per-shot concept sets.
    Queries are averaged within each video and the video averages are
    averaged into the overall row.
    """
    result = DatasetMetrics()
    for video_id, per_query in candidates.items():
        vm = VideoMetrics(video_id)
        for query_key, cand in per_query.items():
            ref = references[video_id][query_key]
            vm.per_query[query_key] = evaluate_summary(cand, ref, annotations[video_id])
        reports = list(vm.per_query.values())
        if reports:
            vm.precision = sum(r.precision for r in reports) / len(reports)
            vm.recall = sum(r.recall for r in reports) / len(reports)
            vm.f1 = sum(r.f1 for r in reports) / len(reports)
        result.videos.append(vm)
    if result.videos:
        k = len(result.videos)
        result.precision = sum(v.precision for v in result.videos) / k
        result.recall = sum(v.recall for v in result.videos) / k
        result.f1 = sum(v.f1 for v in result.videos) / k
    return result


def random_baseline_f1(
    shot_counts: dict, references: dict, annotations: dict, summary_size: int,
    n_draws: int = 100, seed: int = 0,
) -> float:
    """Mean F1 of uniform-random fixed-size summaries over many draws.

    ``shot_counts`` maps video id -> total shots. Every (video, query)
    pair in ``references`` gets an independent uniform draw of
    ``summary_size`` distinct shots per round.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_draws):
        candidates = {}
        for vid, per_query in references.items():
            n = shot_counts[vid]
            candidates[vid] = {
                key: sorted(int(i) for i in rng.choice(n, size=min(summary_size, n), replace=False))
                for key in per_query
            }
        total += evaluate_dataset(candidates, references, annotations).f1
    return total / n_draws


def format_metrics_table(metrics: DatasetMetrics) -> str:
    """Aligned text table: one row per video plus the averaged row."""
    header = f"{'Video':<12} {'Pre':>8} {'Rec':>8} {'F1':>8}"
    lines = [header, "-" * len(header)]
    for v in metrics.videos:
        lines.append(f"{v.video_id:<12} {v.precision:>8.4f} {v.recall:>8.4f} {v.f1:>8.4f}")
    lines.append(f"{'Avg.':<12} {metrics.precision:>8.4f} {metrics.recall:>8.4f} {metrics.f1:>8.4f}")
    return "\n".join(lines)
