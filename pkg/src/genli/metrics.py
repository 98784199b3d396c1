"""Ranking metrics.

AUC uses the rank-sum formulation: sum the average ranks of the positives
and normalize by the number of positive/negative pairs.  Averaging ranks
inside tie groups makes tied pairs count one half, matching the exhaustive
pairwise definition exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

__all__ = ["auc", "AucAccumulator"]


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have matching shapes")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    # average rank per distinct score: ranks are 1-based, ties share the mean
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.diff(sorted_scores) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(scores)]])
    avg_rank_sorted = np.empty(len(scores))
    for lo, hi in zip(starts, ends):
        avg_rank_sorted[lo:hi] = (lo + 1 + hi) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = avg_rank_sorted
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


class AucAccumulator:
    """Streaming AUC over shards; equals the single-pass value exactly
    because scores are retained and ranked once at the end."""

    def __init__(self):
        self._scores: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []

    def add(self, scores: np.ndarray, labels: np.ndarray) -> None:
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(labels).reshape(-1)
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have matching shapes")
        self._scores.append(scores)
        self._labels.append(labels)

    def merge(self, other: "AucAccumulator") -> "AucAccumulator":
        self._scores.extend(other._scores)
        self._labels.extend(other._labels)
        return self

    @property
    def count(self) -> int:
        return sum(len(s) for s in self._scores)

    def value(self) -> float:
        if not self._scores:
            raise DataError("AUC over an empty accumulator")
        return auc(np.concatenate(self._scores), np.concatenate(self._labels))
