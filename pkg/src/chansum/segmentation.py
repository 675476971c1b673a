"""Temporal segmentation of shot-feature sequences by change-point detection.

The segmenter partitions a video's shot features into visually consistent
runs: it minimizes the total within-segment scatter (sum of squared
distances to each segment's mean, a linear-kernel cost) by dynamic
programming, subject to a cap on the number of segments and on the length
of each segment. The number of segments is chosen automatically with the
penalized criterion cost(m) + penalty * m * (log(n / m) + 1).

Both the DP solver and the exhaustive reference solver score candidate
segmentations with the same cached cost primitive, evaluated and folded
in the same order, so their optimal objective values agree bit for bit.
The reference solver remains an independent check of the DP recurrence
itself.

Everything here is a pure function of its inputs and safe to call
concurrently on different videos.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_SEGMENTS = 20
DEFAULT_MAX_SEGMENT_LEN = 200
BRUTE_FORCE_LIMIT = 14


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentBoundaries:
    """A partition of shots [0, n) into contiguous segments.

    ``change_points`` are the strictly increasing interior start indices;
    segment k spans [starts[k], starts[k+1]) with starts = [0, *change_points, n].
    """

    change_points: tuple
    n_shots: int

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        object.__setattr__(self, "change_points", cps)
        if self.n_shots < 1:
            raise SegmentationError(f"n_shots must be >= 1, got {self.n_shots}")
        if any(not 0 < c < self.n_shots for c in cps):
            raise SegmentationError(f"change points {cps} out of range (0, {self.n_shots})")
        if any(a >= b for a, b in zip(cps, cps[1:])):
            raise SegmentationError(f"change points {cps} not strictly increasing")

    @property
    def n_segments(self) -> int:
        return len(self.change_points) + 1

    def segments(self) -> list[tuple[int, int]]:
        starts = (0,) + self.change_points
        ends = self.change_points + (self.n_shots,)
        return list(zip(starts, ends))

    def segment_lengths(self) -> list[int]:
        return [b - a for a, b in self.segments()]


class _ScatterTable:
    """Within-segment scatter costs from prefix sums, with row caching.

    cost(i, j) = sum_{t in [i, j)} ||x_t - mean||^2
               = sumsq[i:j] - ||sum[i:j]||^2 / (j - i), clamped at zero.

    Rows are computed vectorized over j and cached so that every consumer
    (the DP and the exhaustive solver) sees identical floating-point values.
    """

    def __init__(self, features: np.ndarray):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        self.n = x.shape[0]
        self._s1 = np.zeros((self.n + 1, x.shape[1]))
        self._s1[1:] = np.cumsum(x, axis=0)
        self._sq = np.zeros(self.n + 1)
        self._sq[1:] = np.cumsum((x * x).sum(axis=1))
        self._rows: dict[int, np.ndarray] = {}

    def row(self, i: int) -> np.ndarray:
        """Costs of segments starting at i: entry j-i-1 is cost(i, j) for j in (i, n]."""
        cached = self._rows.get(i)
        if cached is None:
            ends = np.arange(i + 1, self.n + 1)
            span = self._s1[ends] - self._s1[i]
            cost = self._sq[ends] - self._sq[i] - (span * span).sum(axis=1) / (ends - i)
            cached = np.maximum(cost, 0.0)
            self._rows[i] = cached
        return cached

    def cost(self, i: int, j: int) -> float:
        return float(self.row(i)[j - i - 1])


def _model_selection_penalty(n: int, m: int, penalty: float) -> float:
    return penalty * m * (math.log(n / m) + 1.0)


def total_cost(features, boundaries: SegmentBoundaries, table: _ScatterTable | None = None) -> float:
    """Raw within-segment cost of a segmentation, folded from the last segment."""
    if table is None:
        table = _ScatterTable(features)
    acc = 0.0
    for a, b in reversed(boundaries.segments()):
        acc = table.cost(a, b) + acc
    return acc


def _validate(features, max_segments, max_segment_len):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise SegmentationError(f"expected a nonempty (n, d) feature array, got shape {x.shape}")
    if max_segments < 1:
        raise SegmentationError(f"max_segments must be >= 1, got {max_segments}")
    if max_segment_len < 1:
        raise SegmentationError(f"max_segment_len must be >= 1, got {max_segment_len}")
    n = x.shape[0]
    if n > max_segments * max_segment_len:
        raise SegmentationError(
            f"{n} shots cannot be covered by {max_segments} segments of length <= {max_segment_len}"
        )
    return x


def kts_segment(features, max_segments: int = DEFAULT_MAX_SEGMENTS,
                max_segment_len: int = DEFAULT_MAX_SEGMENT_LEN,
                penalty: float = 1.0) -> SegmentBoundaries:
    """Optimal constrained segmentation by dynamic programming.

    Returns the segmentation minimizing total within-segment scatter among
    all segmentations with at most ``max_segments`` segments, none longer
    than ``max_segment_len``; the segment count is selected by the
    penalized criterion. Ties are broken toward fewer segments, then the
    lexicographically smallest change-point list.
    """
    x = _validate(features, max_segments, max_segment_len)
    n = x.shape[0]
    table = _ScatterTable(x)
    max_m = min(max_segments, n)

    # best[r][i]: minimal cost of covering [i, n) with exactly r segments,
    # accumulated back-to-front so reconstruction can replay exact values
    inf = math.inf
    best = np.full((max_m + 1, n + 1), inf)
    best[0, n] = 0.0
    for r in range(1, max_m + 1):
        lo_i = max(0, n - r * max_segment_len)
        hi_i = n - r  # at least one shot per remaining segment
        for i in range(lo_i, hi_i + 1):
            j_hi = min(i + max_segment_len, n)
            ends = np.arange(i + 1, j_hi + 1)
            cand = table.row(i)[: j_hi - i] + best[r - 1, ends]
            b = cand.min()
            if b < best[r, i]:
                best[r, i] = b

    feasible = [m for m in range(1, max_m + 1) if math.isfinite(best[m, 0])]
    if not feasible:
        raise SegmentationError("no feasible segmentation under the given constraints")

    chosen_m, chosen_score = None, inf
    for m in feasible:
        score = best[m, 0] + _model_selection_penalty(n, m, penalty)
        if score < chosen_score:
            chosen_m, chosen_score = m, score

    # forward reconstruction: smallest boundary achieving the optimal value
    # at every step yields the lexicographically smallest change-point list
    cps = []
    i = 0
    for r in range(chosen_m, 0, -1):
        j_hi = min(i + max_segment_len, n)
        row = table.row(i)
        target = best[r, i]
        for j in range(i + 1, j_hi + 1):
            if row[j - i - 1] + best[r - 1, j] == target:
                if j < n:
                    cps.append(j)
                i = j
                break
        else:  # pragma: no cover - impossible if the DP filled correctly
            raise AssertionError("DP reconstruction failed")
    return SegmentBoundaries(tuple(cps), n)


def brute_force_segment(features, max_segments: int = DEFAULT_MAX_SEGMENTS,
                        max_segment_len: int = DEFAULT_MAX_SEGMENT_LEN,
                        penalty: float = 1.0) -> SegmentBoundaries:
    """Reference solver: exhaustive enumeration of every feasible segmentation.

    Scores candidates with the same penalized criterion as
    :func:`kts_segment` but never uses its recurrence. Guarded to small
    inputs; ties break toward fewer segments, then lexicographically.
    """
    x = _validate(features, max_segments, max_segment_len)
    n = x.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise SegmentationError(f"brute force is limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    table = _ScatterTable(x)

    best_key, best_cps = None, None
    for m in range(1, min(max_segments, n) + 1):
        pen = _model_selection_penalty(n, m, penalty)
        for cps in itertools.combinations(range(1, n), m - 1):
            bounds = (0,) + cps + (n,)
            if any(b - a > max_segment_len for a, b in zip(bounds, bounds[1:])):
                continue
            acc = 0.0
            for a, b in zip(reversed(bounds[:-1]), reversed(bounds[1:])):
                acc = table.cost(a, b) + acc
            key = (acc + pen, m, cps)
            if best_key is None or key < best_key:
                best_key, best_cps = key, cps
    return SegmentBoundaries(best_cps, n)
