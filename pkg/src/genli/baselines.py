"""Competing ways to score a long behavior history against a target.

Two groups live here.  The scoring kernels are minimal implementations of
each retrieval family's inner loop, used by the complexity benchmarks: every
kernel offers ``score_one`` (an honest single-behavior call for per-call
timing) and ``score_all`` (the vectorized batch form; both routes must agree
numerically).  The trainable baselines (average pooling, soft inner-product
retrieval) reuse the shared CTR model skeleton so accuracy comparisons only
vary the long-term interest feature.
"""

from __future__ import annotations

import math

import numpy as np

from . import nn
from .config import Config
from .model import CtrModelBase
from .retrieval import topk_from_scores

__all__ = [
    "LookupKernel",
    "InnerProductKernel",
    "HardCategoryKernel",
    "SimHashKernel",
    "CollisionKernel",
    "TwinAttentionKernel",
    "average_pool",
    "AvgPoolModel",
    "SimSoftModel",
    "SCORING_KERNELS",
]


class LookupKernel:
    """Constant-time scoring: one read from the interest distribution."""

    def __init__(self, p: np.ndarray):
        self.p = np.asarray(p, dtype=np.float64)
        self.n = len(self.p)
        self._p_list = self.p.tolist()  # plain list keeps score_one a pure index

    def score_one(self, item_id: int) -> float:
        return self._p_list[item_id % self.n]

    def score_all(self, item_ids: np.ndarray) -> np.ndarray:
        return self.p[item_ids % self.n]


class InnerProductKernel:
    """Soft relevance: dot product between behavior and target embeddings."""

    def __init__(self, target: np.ndarray):
        self.target = np.asarray(target, dtype=np.float64)
        self._t_list = self.target.tolist()

    def score_one(self, behavior: list[float]) -> float:
        acc = 0.0
        for a, b in zip(behavior, self._t_list):
            acc += a * b
        return acc

    def score_all(self, behaviors: np.ndarray) -> np.ndarray:
        return behaviors @ self.target


class HardCategoryKernel:
    """Hard relevance: 1 when the behavior shares the target's category."""

    def __init__(self, target_category: int):
        self.target_category = int(target_category)

    def score_one(self, category: int) -> float:
        return 1.0 if category == self.target_category else 0.0

    def score_all(self, categories: np.ndarray) -> np.ndarray:
        return (categories == self.target_category).astype(np.float64)


class SimHashKernel:
    """Random-hyperplane signatures; similarity = matching bits.

    Signatures are plain integers with bit i set when the embedding lies on
    the positive side of hyperplane i.  For unit vectors at angle theta, each
    bit collides with probability 1 - theta/pi.  Behavior signatures are
    meant to be computed once offline, so scoring is pure bit arithmetic.
    """

    def __init__(self, dim: int, bits: int, rng: np.random.Generator):
        if bits > 64:
            raise ValueError("signatures wider than 64 bits are not supported")
        self.bits = bits
        self.planes = rng.standard_normal((bits, dim))
        self._weights = (1 << np.arange(bits, dtype=np.uint64))
        self._target_sig = 0

    def signature(self, vec: np.ndarray) -> int:
        positive = (self.planes @ np.asarray(vec)) >= 0
        return int(self._weights[positive].sum())

    def signature_all(self, vecs: np.ndarray) -> np.ndarray:
        positive = (vecs @ self.planes.T) >= 0
        return (positive.astype(np.uint64) * self._weights).sum(axis=1)

    def prepare_target(self, target: np.ndarray) -> None:
        self._target_sig = self.signature(target)

    def score_one(self, signature: int) -> int:
        return self.bits - (signature ^ self._target_sig).bit_count()

    def score_all(self, signatures: np.ndarray) -> np.ndarray:
        diff = np.bitwise_xor(signatures.astype(np.uint64), np.uint64(self._target_sig))
        return self.bits - np.bitwise_count(diff).astype(np.int64)


class CollisionKernel:
    """Multi-round bucket hashing; score = rounds whose buckets collide.

    The signature bits are split evenly across rounds, each round bucketing
    an embedding by its sign pattern over that round's hyperplanes.  A
    behavior is selected when it collides with the target in at least one
    round; the collision count is its weight.
    """

    def __init__(self, dim: int, bits: int, rounds: int, rng: np.random.Generator):
        if bits % rounds:
            raise ValueError(f"bits ({bits}) must split evenly over rounds ({rounds})")
        self.rounds = rounds
        self.bits_per_round = bits // rounds
        self.planes = rng.standard_normal((rounds, self.bits_per_round, dim))
        self._weights = 1 << np.arange(self.bits_per_round)
        self._target_buckets: tuple[int, ...] = ()

    def buckets(self, vec: np.ndarray) -> tuple[int, ...]:
        out = []
        for r in range(self.rounds):
            positive = (self.planes[r] @ np.asarray(vec)) >= 0
            out.append(int(self._weights[positive].sum()))
        return tuple(out)

    def buckets_all(self, vecs: np.ndarray) -> np.ndarray:
        positive = (vecs @ self.planes.reshape(-1, vecs.shape[-1]).T) >= 0
        per_round = positive.reshape(len(vecs), self.rounds, self.bits_per_round)
        return (per_round * self._weights).sum(axis=2)

    def prepare_target(self, target: np.ndarray) -> None:
        self._target_buckets = self.buckets(target)

    def score_one(self, buckets: tuple[int, ...]) -> int:
        hits = 0
        for mine, theirs in zip(buckets, self._target_buckets):
            if mine == theirs:
                hits += 1
        return hits

    def score_all(self, buckets: np.ndarray) -> np.ndarray:
        return (buckets == np.asarray(self._target_buckets)).sum(axis=1)

    def select(self, buckets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions colliding in any round, newest first, with their counts."""
        counts = self.score_all(buckets)
        positions = np.flatnonzero(counts > 0)
        return positions, counts[positions]


class TwinAttentionKernel:
    """Per-behavior target attention score: projected query dot projected key.

    Key projections depend only on the behavior, so a fair comparison
    precomputes them once per user; the per-candidate work is the dot
    product against the projected query.
    """

    def __init__(self, dim: int, head_dim: int, rng: np.random.Generator):
        scale = 1.0 / math.sqrt(dim)
        self.w_query = rng.standard_normal((dim, head_dim)) * scale
        self.w_key = rng.standard_normal((dim, head_dim)) * scale
        self.head_dim = head_dim
        self._query: np.ndarray | None = None
        self._query_list: list[float] = []

    def project_keys(self, behaviors: np.ndarray) -> np.ndarray:
        return behaviors @ self.w_key

    def prepare_target(self, target: np.ndarray) -> None:
        self._query = (np.asarray(target) @ self.w_query) / math.sqrt(self.head_dim)
        self._query_list = self._query.tolist()

    def score_one(self, projected_key: list[float]) -> float:
        acc = 0.0
        for a, b in zip(projected_key, self._query_list):
            acc += a * b
        return acc

    def score_all(self, projected_keys: np.ndarray) -> np.ndarray:
        return projected_keys @ self._query


SCORING_KERNELS = (
    "genli_lookup",
    "sim_soft",
    "sim_hard",
    "eta_simhash",
    "sdim_collision",
    "twin_attention",
    "avg_pool",
)


def average_pool(embeddings: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mask-aware mean over (B, L, d) embeddings; rows need >= 1 valid entry."""
    m = np.asarray(mask, bool)
    counts = m.sum(axis=1, keepdims=True)
    return (embeddings * m[..., None]).sum(axis=1) / counts


# -- trainable baselines --------------------------------------------------


class AvgPoolModel(CtrModelBase):
    """Long-term feature = unweighted mean of every behavior embedding."""

    def long_term_width(self) -> int:
        return self.embedder.width

    def long_term_feature(self, batch, target_emb, timings=None):
        emb = self.embedder(batch["items"], batch["categories"])  # (B, L, d)
        weights = nn.Tensor(batch["mask"].astype(np.float64)[..., None])
        total = (emb * weights).sum(axis=1)
        inv = nn.Tensor(1.0 / batch["lengths"].astype(np.float64)[:, None])
        return total * inv


class SimSoftModel(CtrModelBase):
    """Two-stage baseline: top-K behaviors by embedding inner product with
    the target, then one attention summary.  K matches the total budget the
    generative model spends across its distributions (3k)."""

    def __init__(self, cfg: Config, n_items: int, n_categories: int):
        super().__init__(cfg, n_items, n_categories)
        self.select_k = cfg.top_k * 3
        self.aggregator = nn.MultiHeadAttention(
            self.store, "sim_soft/aggregate", self.embedder.width,
            self.embedder.width, cfg.heads, cfg.head_dim, self.rng,
        )

    def long_term_width(self) -> int:
        return self.cfg.head_dim

    def long_term_feature(self, batch, target_emb, timings=None):
        items, cats, mask = batch["items"], batch["categories"], batch["mask"]
        item_rows = self.embedder.items.rows.data
        cat_rows = self.embedder.categories.rows.data
        behaviors = np.concatenate([item_rows[items], cat_rows[cats]], axis=-1)
        scores = np.einsum("bld,bd->bl", behaviors, target_emb.data[:, 0, :])
        positions, _ = topk_from_scores(scores, mask, self.select_k)
        sel_mask = positions >= 0
        safe = np.where(sel_mask, positions, 0)
        sel_items = np.take_along_axis(items, safe, axis=1) * sel_mask
        sel_cats = np.take_along_axis(cats, safe, axis=1) * sel_mask
        selected = self.embedder(sel_items, sel_cats)
        out = self.aggregator(target_emb, selected, selected, sel_mask)
        return out.reshape(out.shape[0], self.cfg.head_dim)
