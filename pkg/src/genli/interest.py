"""Interest distribution generation from the recent behavior window.

Each head turns the newest window of behaviors into a categorical
distribution over the hashed item-id space, using only the window: the
target item never enters, which is what lets one user-level pass be reused
across every candidate scored for that user.  Two independently
parameterized heads produce the implicit (exposure-driven) and explicit
(click-driven) distributions; their softmaxed difference is the relative
distribution and has no parameters of its own.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DataError
from .nn import MLP, MultiHeadAttention, ParameterStore, Tensor, concat, softmax
from .retrieval import bucket_of

__all__ = [
    "InterestHead",
    "relative_distribution",
    "explicit_loss",
    "implicit_loss",
]


class InterestHead:
    """Window attention plus an MLP ending in a softmax over id buckets.

    The attention uses two query rows: the newest behavior in the window and
    a learnable probe row.  Their outputs are concatenated and projected back
    to ``head_dim`` to form the hidden interest vector.
    """

    def __init__(self, store: ParameterStore, name: str, behavior_dim: int,
                 heads: int, head_dim: int, mlp_hidden: Sequence[int],
                 n_buckets: int, rng: np.random.Generator):
        self.n_buckets = n_buckets
        self.attention = MultiHeadAttention(
            store, name + "/attention", behavior_dim, behavior_dim, heads, head_dim, rng
        )
        lim = 1.0 / math.sqrt(behavior_dim)
        self.probe = store.add(name + "/probe", rng.uniform(-lim, lim, (1, behavior_dim)))
        lim2 = math.sqrt(6.0 / (3 * head_dim))
        self.combine = store.add(
            name + "/combine", rng.uniform(-lim2, lim2, (2 * head_dim, head_dim))
        )
        self.mlp = MLP(store, name + "/mlp", [head_dim, *mlp_hidden, n_buckets], rng)

    def hidden_interest(self, window: Tensor, mask: np.ndarray) -> Tensor:
        """(B, l, d) window plus validity mask -> (B, head_dim) hidden vector."""
        b, l, _ = window.shape
        mask = np.asarray(mask, bool)
        row_has_any = mask.any(axis=1)
        if not row_has_any.all():
            raise DataError("interest window: a user has no behaviors")
        if not mask[:, 0].all():
            raise DataError("interest window: sequences must be newest-first "
                            "(position 0 empty but later positions filled)")
        newest = window.slice_axis(1, 0, 1)                      # (B, 1, d)
        probe = self.probe.reshape(1, 1, -1).broadcast_to((b, 1, self.probe.shape[1]))
        queries = concat([newest, probe], axis=1)                # (B, 2, d)
        attended = self.attention(queries, window, window, mask)  # (B, 2, head_dim)
        flat = attended.reshape(b, 2 * attended.shape[2])
        return flat @ self.combine

    def generate_distribution(self, window: Tensor, mask: np.ndarray) -> Tensor:
        """Full head: window -> softmax over the hashed id space (B, N)."""
        return softmax(self.mlp(self.hidden_interest(window, mask)))


def relative_distribution(p_explicit: Tensor, p_implicit: Tensor) -> Tensor:
    """Softmax of the probability difference; highlights buckets where click
    interest exceeds mere exposure interest.  Parameter free."""
    return softmax(p_explicit - p_implicit)


def explicit_loss(p_explicit: Tensor, target_items: np.ndarray,
                  labels: np.ndarray) -> Tensor:
    """Mean over the batch of ``-log p[bucket(target)]`` on clicked samples.

    Non-clicked samples contribute zero, so the head only learns where
    clicks actually landed.
    """
    n = p_explicit.shape[-1]
    buckets = bucket_of(np.asarray(target_items), n)
    picked = p_explicit.pick_per_row(buckets)                    # (B, 1)
    weights = Tensor(np.asarray(labels, dtype=np.float64).reshape(-1, 1))
    return (-(picked.log()) * weights).mean()


def implicit_loss(p_implicit: Tensor, exposed_items: np.ndarray) -> Tensor:
    """Mean over the batch of ``-log p[bucket(exposed)]``; every sample
    counts because every impression is an exposure."""
    n = p_implicit.shape[-1]
    buckets = bucket_of(np.asarray(exposed_items), n)
    picked = p_implicit.pick_per_row(buckets)
    return (-(picked.log())).mean()
