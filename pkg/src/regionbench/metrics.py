"""GLEU sequence similarity over region ids and score aggregation.

GLEU pools every contiguous n-gram for n = 1..max_n from both sequences,
counts clipped matches and returns ``min(precision, recall)``. Short
sequences simply contribute fewer n-grams; there is no separate brevity
penalty.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

DEFAULT_MAX_N = 4


def _ngrams(seq: Sequence[int], max_n: int) -> Counter[tuple[int, ...]]:
    counts: Counter[tuple[int, ...]] = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(seq) - n + 1):
            counts[tuple(seq[i : i + n])] += 1
    return counts


def gleu(hypothesis: Sequence[int], reference: Sequence[int], max_n: int = DEFAULT_MAX_N) -> float:
    if not hypothesis or not reference:
        raise ValueError("gleu needs two nonempty sequences")
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    hyp = _ngrams(hypothesis, max_n)
    ref = _ngrams(reference, max_n)
    matches = sum((hyp & ref).values())
    precision = matches / sum(hyp.values())
    recall = matches / sum(ref.values())
    return min(precision, recall)


def score_pair(
    hypothesis: Sequence[int], references: Sequence[Sequence[int]], max_n: int = DEFAULT_MAX_N
) -> tuple[float, int]:
    """Best score over ``references`` and its index; ties go to the lowest index."""
    if not references:
        raise ValueError("score_pair needs at least one reference")
    best, best_idx = -1.0, -1
    for idx, ref in enumerate(references):
        score = gleu(hypothesis, ref, max_n)
        if score > best:
            best, best_idx = score, idx
    return best, best_idx


@dataclass(frozen=True)
class PairSummary:
    mean: float
    std: float
    k: int


def aggregate_runs(scores: Sequence[float]) -> PairSummary:
    """Mean and sample standard deviation of per-run scores (std is 0 for K=1)."""
    if not scores:
        raise ValueError("aggregate_runs needs at least one score")
    mean = math.fsum(scores) / len(scores)
    std = statistics.stdev(scores) if len(scores) > 1 else 0.0
    return PairSummary(mean=mean, std=std, k=len(scores))


@dataclass(frozen=True)
class DistributionSummary:
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    n: int

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def quantile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks (Hyndman-Fan type 7)."""
    ordered = sorted(values)
    h = (len(ordered) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (h - lo) * (ordered[hi] - ordered[lo])


def summarize_distribution(values: Sequence[float]) -> DistributionSummary:
    if not values:
        raise ValueError("summarize_distribution needs at least one value")
    agg = aggregate_runs(values)
    return DistributionSummary(
        mean=agg.mean,
        std=agg.std,
        median=quantile(values, 0.5),
        q1=quantile(values, 0.25),
        q3=quantile(values, 0.75),
        n=len(values),
    )
