"""Constant-time behavior scoring and top-k retrieval.

A behavior's score under an interest distribution is a single array lookup
at its hashed id (``item_id mod n_buckets``), so scoring a history costs
O(1) per behavior no matter how wide the embeddings are.  Top-k selection
keeps a bounded heap over one pass; ties prefer the more recent behavior,
which under newest-first storage means the lower position index.
"""

from __future__ import annotations

import dataclasses
import heapq

import numpy as np

__all__ = [
    "bucket_of",
    "lookup_score",
    "sequence_scores",
    "retrieve_topk",
    "topk_from_scores",
    "retrieve_batch",
    "retrieve_all",
    "RetrievalResult",
]


def bucket_of(item_ids, n_buckets: int):
    """Hashed position of an item id in the interest distribution."""
    return np.asarray(item_ids) % n_buckets


def lookup_score(item_id: int, p: np.ndarray) -> float:
    """Score one behavior against a distribution: a single indexed read."""
    return float(p[item_id % len(p)])


def sequence_scores(item_ids: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorized lookup scores for a whole id array (any shape)."""
    return p[bucket_of(item_ids, len(p))]


def retrieve_topk(item_ids: np.ndarray, valid: np.ndarray, p: np.ndarray,
                  k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k behaviors of one sequence under distribution ``p``.

    Returns (positions, scores), score-descending with recency breaking
    ties.  Padded entries (when fewer than k behaviors are valid) use
    position -1 and score 0.  Single pass, heap bounded at k.
    """
    scores = sequence_scores(np.asarray(item_ids), p)
    heap: list[tuple[float, int]] = []  # (score, -position): min is the weakest
    for pos, ok in enumerate(np.asarray(valid, bool)):
        if not ok:
            continue
        entry = (float(scores[pos]), -pos)
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif entry > heap[0]:
            heapq.heapreplace(heap, entry)
    chosen = sorted(((s, -neg) for s, neg in heap), key=lambda e: (-e[0], e[1]))
    positions = np.full(k, -1, dtype=np.int64)
    out_scores = np.zeros(k, dtype=np.float64)
    for i, (s, pos) in enumerate(chosen):
        positions[i] = pos
        out_scores[i] = s
    return positions, out_scores


def topk_from_scores(scores: np.ndarray, mask: np.ndarray,
                     k: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched top-k over precomputed (B, L) scores with the recency tie rule.

    Vectorized partial selection; positions pad with -1 and scores with 0
    when a row has fewer than k valid entries.
    """
    scores = np.where(np.asarray(mask, bool), scores, -np.inf)
    b, length = scores.shape
    kk = min(k, length)
    part = np.argpartition(-scores, kk - 1, axis=1)[:, :kk]
    # The k-th score per row; ties at this boundary need the recency rule,
    # so gather every candidate at or above it before ordering.
    thresholds = np.take_along_axis(scores, part, axis=1).min(axis=1)
    positions = np.full((b, k), -1, dtype=np.int64)
    out_scores = np.zeros((b, k), dtype=np.float64)
    for row in range(b):
        cand = np.flatnonzero(scores[row] >= thresholds[row])
        entries = sorted(((-scores[row, pos], pos) for pos in cand))[:k]
        for i, (neg_s, pos) in enumerate(entries):
            positions[row, i] = pos
            out_scores[row, i] = -neg_s
    return positions, out_scores


def retrieve_batch(item_ids: np.ndarray, mask: np.ndarray, p: np.ndarray,
                   k: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched lookup-scored top-k: (B, L) ids, (B, N) distributions -> (B, k).

    Agrees exactly with per-row :func:`retrieve_topk`.
    """
    item_ids = np.asarray(item_ids)
    scores = np.take_along_axis(p, bucket_of(item_ids, p.shape[-1]), axis=1)
    return topk_from_scores(scores, mask, k)


@dataclasses.dataclass
class RetrievalResult:
    """Per-kind top-k selections for a batch; kind -> (positions, scores)."""

    by_kind: dict[str, tuple[np.ndarray, np.ndarray]]

    def total_selected(self) -> int:
        """Upper bound K on behaviors feeding fusion (duplicates kept)."""
        return sum(pos.shape[-1] for pos, _ in self.by_kind.values())


def retrieve_all(item_ids: np.ndarray, mask: np.ndarray,
                 distributions: dict[str, np.ndarray], k: int) -> RetrievalResult:
    """Run batched top-k once per interest kind; duplicates across kinds are
    deliberately kept (a behavior scoring high everywhere appears thrice)."""
    return RetrievalResult({
        kind: retrieve_batch(item_ids, mask, p, k)
        for kind, p in distributions.items()
    })
