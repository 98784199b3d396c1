"""Embedding tables for sparse id features, plus vocabulary file handling.

Index 0 of every table is the padding/unknown row: it is initialized to zero,
frozen during training, and unknown raw values map onto it at load time.
A behavior embedding is the concatenation of its item and category vectors,
so the total behavior width is the sum of the per-field widths.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import DataError
from .nn import ParameterStore, Tensor

log = logging.getLogger(__name__)


class EmbeddingTable:
    """One field's embedding matrix inside a shared ParameterStore."""

    def __init__(self, store: ParameterStore, field: str, vocab_size: int, dim: int,
                 rng: np.random.Generator):
        if vocab_size < 1:
            raise ValueError(f"vocab size for {field!r} must be positive")
        limit = 1.0 / np.sqrt(dim)
        rows = rng.uniform(-limit, limit, (vocab_size, dim))
        rows[0] = 0.0
        self.field = field
        self.vocab_size = vocab_size
        self.dim = dim
        self.rows = store.add(f"embedding/{field}", rows, frozen_rows=(0,), row_sparse=True)

    def __call__(self, indices: np.ndarray) -> Tensor:
        """Gather rows; output shape is ``indices.shape + (dim,)``."""
        idx = np.asarray(indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab_size):
            bad = int(idx.min()) if idx.min() < 0 else int(idx.max())
            raise DataError(
                f"{self.field} id {bad} outside vocabulary [0, {self.vocab_size})"
            )
        return self.rows.take_rows(idx)


class BehaviorEmbedder:
    """Item and category tables joined into one behavior representation."""

    def __init__(self, store: ParameterStore, n_items: int, n_categories: int,
                 dim_item: int, dim_category: int, rng: np.random.Generator):
        self.items = EmbeddingTable(store, "item", n_items, dim_item, rng)
        self.categories = EmbeddingTable(store, "category", n_categories, dim_category, rng)
        self.width = dim_item + dim_category

    def __call__(self, item_ids: np.ndarray, category_ids: np.ndarray) -> Tensor:
        from .nn import concat

        return concat([self.items(item_ids), self.categories(category_ids)], axis=-1)


class Vocabulary:
    """Raw string values mapped to dense indices; 0 is reserved for unknown."""

    def __init__(self, field: str, raw_to_index: dict[str, int]):
        self.field = field
        self.raw_to_index = raw_to_index
        self.unknown_count = 0

    @property
    def size(self) -> int:
        """Table size needed to hold every index plus the padding row."""
        return (max(self.raw_to_index.values()) + 1) if self.raw_to_index else 1

    @classmethod
    def identity(cls, field: str, count: int) -> "Vocabulary":
        """Vocabulary where raw value ``str(i)`` maps to index i, 1..count."""
        return cls(field, {str(i): i for i in range(1, count + 1)})

    def lookup(self, raw: str) -> int:
        idx = self.raw_to_index.get(raw)
        if idx is None:
            self.unknown_count += 1
            return 0
        return idx

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for raw, idx in sorted(self.raw_to_index.items(), key=lambda kv: kv[1]):
                fh.write(f"{raw}\t{idx}\n")

    @classmethod
    def load(cls, path: str | Path, field: str) -> "Vocabulary":
        mapping: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{line_no}: expected raw<TAB>index")
                try:
                    idx = int(parts[1])
                except ValueError as exc:
                    raise DataError(f"{path}:{line_no}: bad index {parts[1]!r}") from exc
                if idx < 1:
                    raise DataError(f"{path}:{line_no}: index {idx} is reserved")
                mapping[parts[0]] = idx
        return cls(field, mapping)

    def warn_if_unknowns(self) -> None:
        if self.unknown_count:
            log.warning(
                "%s: %d unknown values mapped to the padding index",
                self.field, self.unknown_count,
            )
