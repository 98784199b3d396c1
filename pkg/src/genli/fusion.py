"""Fusing retrieved behaviors into the long-term interest feature.

Each interest kind gets its own target-query attention over the behaviors
that kind retrieved; the per-kind summaries are concatenated and passed
through a learned sigmoid gate that decides, element by element, how much
of each kind survives into the final long-term feature.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .nn import Dense, MultiHeadAttention, ParameterStore, Tensor, concat

__all__ = ["InterestFusion"]


class InterestFusion:
    """Per-kind aggregation attentions plus the gated combine step."""

    def __init__(self, store: ParameterStore, name: str, behavior_dim: int,
                 heads: int, head_dim: int, kinds: Sequence[str],
                 rng: np.random.Generator):
        self.kinds = tuple(kinds)
        self.head_dim = head_dim
        self.aggregators = {
            kind: MultiHeadAttention(
                store, f"{name}/{kind}", behavior_dim, behavior_dim,
                heads, head_dim, rng,
            )
            for kind in self.kinds
        }
        width = len(self.kinds) * head_dim
        self.gate_hidden = Dense(store, name + "/gate/hidden", width, width, "prelu", rng)
        self.gate_out = Dense(store, name + "/gate/out", width, width, "sigmoid", rng)
        lim = math.sqrt(6.0 / (width + head_dim))
        self.project = store.add(name + "/project",
                                 rng.uniform(-lim, lim, (width, head_dim)))

    def aggregate(self, kind: str, selected: Tensor, selected_mask: np.ndarray,
                  target: Tensor) -> Tensor:
        """Summarize one kind's retrieved behaviors against the target.

        selected: (B, k, d) embeddings; selected_mask marks real (non-pad)
        picks; target: (B, 1, d).  Returns (B, head_dim).
        """
        out = self.aggregators[kind](target, selected, selected, selected_mask)
        return out.reshape(out.shape[0], self.head_dim)

    def fuse(self, summaries: Sequence[Tensor]) -> Tensor:
        """Gate and project the per-kind summaries into the final feature.

        A gate output near zero wipes the corresponding channels before the
        projection, so irrelevant interest kinds can be silenced per sample.
        """
        if len(summaries) != len(self.kinds):
            raise ValueError(
                f"expected {len(self.kinds)} summaries, got {len(summaries)}"
            )
        z = concat(list(summaries), axis=-1) if len(summaries) > 1 else summaries[0]
        gate = self.gate_out(self.gate_hidden(z))
        return (gate * z) @ self.project
