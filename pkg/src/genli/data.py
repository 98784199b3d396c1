"""Impression records, behavior sequences, and the synthetic data generator.

File format, one impression per line::

    user_id<TAB>target_item<TAB>target_category<TAB>label<TAB>exposed_item<TAB>behavior_list

where ``behavior_list`` is a comma-separated run of ``item:category:timestamp``
triplets and ``exposed_item`` may be empty when no exposure log exists.
Sequences are stored newest-first internally; loading truncates to the newest
``seq_len`` behaviors and pads short histories with the reserved id 0.

The synthetic generator plants per-user interest clusters with temporal
drift: a user's older history is dominated by clusters that no longer drive
clicks, the recent history mixes the currently active clusters, and click
probabilities follow the target's relation to the active set — by category
alone, or down to repeated signature items when those are enabled.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .embedding import Vocabulary
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


class Behavior(NamedTuple):
    item: int
    category: int
    timestamp: int


@dataclasses.dataclass
class Sample:
    """One impression: a user, their history, a target, and the click label."""

    user: int
    target_item: int
    target_category: int
    label: int
    exposed_item: int  # -1 when the log carries no exposure column
    seq_index: int     # row into the owning Dataset's sequence pool


class Dataset:
    """Samples plus a pool of unique padded sequences they point into.

    Keeping one pool row per distinct history makes a 10^5-impression file
    with shared 500-long histories cheap to hold in memory; batches gather
    (batch, seq_len) views out of the pool on demand.
    """

    def __init__(self, seq_len: int):
        self.seq_len = seq_len
        self.samples: list[Sample] = []
        self.seq_items = np.zeros((0, seq_len), dtype=np.int32)
        self.seq_categories = np.zeros((0, seq_len), dtype=np.int32)
        self.seq_lengths = np.zeros(0, dtype=np.int32)
        self._pool_index: dict[bytes, int] = {}
        self._pool_rows: list[tuple[np.ndarray, np.ndarray, int]] = []

    def __len__(self) -> int:
        return len(self.samples)

    def add_sequence(self, items: np.ndarray, categories: np.ndarray,
                     timestamps: np.ndarray, dedup_key: bytes | None = None) -> int:
        """Register a history and return its pool row; newest-first + padded."""
        if dedup_key is not None:
            hit = self._pool_index.get(dedup_key)
            if hit is not None:
                return hit
        order = np.argsort(-np.asarray(timestamps), kind="stable")[: self.seq_len]
        items = np.asarray(items, dtype=np.int32)[order]
        categories = np.asarray(categories, dtype=np.int32)[order]
        n = len(items)
        row_items = np.zeros(self.seq_len, dtype=np.int32)
        row_cats = np.zeros(self.seq_len, dtype=np.int32)
        row_items[:n] = items
        row_cats[:n] = categories
        idx = len(self._pool_rows)
        self._pool_rows.append((row_items, row_cats, n))
        if dedup_key is not None:
            self._pool_index[dedup_key] = idx
        return idx

    def finalize(self) -> None:
        if self._pool_rows:
            self.seq_items = np.stack([r[0] for r in self._pool_rows])
            self.seq_categories = np.stack([r[1] for r in self._pool_rows])
            self.seq_lengths = np.array([r[2] for r in self._pool_rows], dtype=np.int32)
        self._pool_rows = []
        self._pool_index = {}
        self.user = np.array([s.user for s in self.samples], dtype=np.int32)
        self.seq_index = np.array([s.seq_index for s in self.samples], dtype=np.int32)
        self.target_item = np.array([s.target_item for s in self.samples], dtype=np.int32)
        self.target_category = np.array(
            [s.target_category for s in self.samples], dtype=np.int32
        )
        self.label = np.array([s.label for s in self.samples], dtype=np.float64)
        self.exposed_item = np.array(
            [s.exposed_item for s in self.samples], dtype=np.int32
        )

    def batch(self, indices: np.ndarray) -> dict[str, np.ndarray]:
        """Materialize one training batch as dense arrays."""
        rows = self.seq_index[indices]
        lengths = self.seq_lengths[rows]
        mask = np.arange(self.seq_len) < lengths[:, None]
        return {
            "items": self.seq_items[rows],
            "categories": self.seq_categories[rows],
            "mask": mask,
            "lengths": lengths,
            "target_item": self.target_item[indices],
            "target_category": self.target_category[indices],
            "label": self.label[indices],
            "exposed_item": self.exposed_item[indices],
            "user": self.user[indices],
        }

    def max_ids(self) -> tuple[int, int]:
        """Largest item and category id present (for sizing embedding tables)."""
        item_hi = int(max(self.seq_items.max(initial=0), self.target_item.max(initial=0),
                          self.exposed_item.max(initial=0)))
        cat_hi = int(max(self.seq_categories.max(initial=0),
                         self.target_category.max(initial=0)))
        return item_hi, cat_hi


def surrogate_exposed(batch: dict[str, np.ndarray]) -> np.ndarray:
    """Fill missing exposed items with a stand-in from the user's history.

    The stand-in is the most recent behavior sharing the target's category;
    when no behavior matches, the most recent behavior of any category.
    Samples that already carry an exposure keep it.
    """
    exposed = batch["exposed_item"].copy()
    missing = np.flatnonzero(exposed < 0)
    if missing.size == 0:
        return exposed
    items = batch["items"][missing]
    cats = batch["categories"][missing]
    mask = batch["mask"][missing]
    want = batch["target_category"][missing][:, None]
    match = (cats == want) & mask
    first_match = match.argmax(axis=1)          # 0 when no match; disambiguate below
    has_match = match.any(axis=1)
    pick = np.where(has_match, first_match, 0)  # position 0 is the newest behavior
    exposed[missing] = items[np.arange(len(missing)), pick]
    return exposed


# -- record format --------------------------------------------------------


def format_record(user: int | str, target_item: int | str, target_category: int | str,
                  label: int, exposed_item: int | str | None,
                  behaviors: Iterable[Behavior]) -> str:
    exposed = "" if exposed_item is None else str(exposed_item)
    blob = ",".join(f"{b.item}:{b.category}:{b.timestamp}" for b in behaviors)
    return f"{user}\t{target_item}\t{target_category}\t{label}\t{exposed}\t{blob}"


def _parse_behavior_field(field: str, where: str) -> np.ndarray:
    """Parse ``item:cat:ts,...`` into an (n, 3) int array."""
    if not field:
        return np.zeros((0, 3), dtype=np.int64)
    flat = field.replace(":", ",")
    try:
        values = np.fromiter(map(int, flat.split(",")), dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{where}: malformed behavior list") from exc
    if values.size % 3:
        raise DataError(f"{where}: behavior list is not item:category:timestamp triplets")
    return values.reshape(-1, 3)


def load_dataset(path: str | Path, seq_len: int,
                 item_vocab: Vocabulary | None = None,
                 category_vocab: Vocabulary | None = None) -> Dataset:
    """Read an impression file into a Dataset.

    With vocabularies given, raw values go through them (unknowns map to 0
    and are counted); without, fields must already be integer ids.
    """
    ds = Dataset(seq_len)

    def to_item(raw: str) -> int:
        return item_vocab.lookup(raw) if item_vocab else int(raw)

    def to_cat(raw: str) -> int:
        return category_vocab.lookup(raw) if category_vocab else int(raw)

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(f"{path}:{line_no}: expected 6 tab-separated fields, "
                                f"got {len(parts)}")
            where = f"{path}:{line_no}"
            try:
                user = int(parts[0])
                label = int(parts[3])
            except ValueError as exc:
                raise DataError(f"{where}: non-integer user or label") from exc
            if label not in (0, 1):
                raise DataError(f"{where}: label must be 0 or 1, got {parts[3]!r}")
            target_item = to_item(parts[1])
            target_category = to_cat(parts[2])
            exposed = -1 if parts[4] == "" else to_item(parts[4])
            if item_vocab is None and category_vocab is None:
                # integer fast path: identical histories parse once
                seq_idx = ds._pool_index.get(parts[5].encode())
                if seq_idx is None:
                    triples = _parse_behavior_field(parts[5], where)
                    seq_idx = ds.add_sequence(
                        triples[:, 0], triples[:, 1], triples[:, 2],
                        dedup_key=parts[5].encode(),
                    )
            else:
                triples = _parse_behavior_field(parts[5], where)
                items = np.array([to_item(str(v)) for v in triples[:, 0]])
                cats = np.array([to_cat(str(v)) for v in triples[:, 1]])
                seq_idx = ds.add_sequence(items, cats, triples[:, 2])
            ds.samples.append(Sample(user, target_item, target_category, label,
                                     exposed, seq_idx))
    ds.finalize()
    for vocab in (item_vocab, category_vocab):
        if vocab is not None:
            vocab.warn_if_unknowns()
    return ds


# -- synthetic data -------------------------------------------------------


@dataclasses.dataclass
class SyntheticSpec:
    """Knobs for the planted-interest generator; every field has a default
    so tests can override just what they need."""

    seed: int = 1
    n_users: int = 2000
    n_items: int = 600
    n_categories: int = 30
    clusters_per_user: int = 3
    seq_len: int = 500
    impressions_per_user: int = 50
    p_click_in: float = 0.9
    p_click_out: float = 0.1
    noise_rate: float = 0.2      # chance a history slot is a uniform random item
    recur_rate: float = 0.15     # chance an old-era slot revisits an active cluster
    active_fraction: float = 0.5  # newest share of the history drawn from active clusters
    active_share: float = 0.5    # exposure probability of an active-category target
    expired_share: float = 0.25  # exposure probability of an expired-category target
    train_fraction: float = 0.8
    favorites_per_cluster: int = 0  # per-cluster signature items (0 disables them)
    favorite_rate: float = 0.5   # chance a cluster slot repeats a signature item
    favorite_exposure: float = 0.5  # chance a cluster target is a signature item
    p_click_near: float = 0.3    # click prob for active-category non-signature targets
    fresh_slots: int = 0         # newest slots that never repeat signature items

    def validate(self) -> None:
        if 2 * self.clusters_per_user > self.n_categories:
            raise ConfigError(
                f"need 2*clusters_per_user <= n_categories, got "
                f"{self.clusters_per_user} clusters over {self.n_categories} categories"
            )
        for name in ("p_click_in", "p_click_out", "noise_rate", "recur_rate",
                     "active_share", "expired_share", "train_fraction",
                     "favorite_rate", "favorite_exposure", "p_click_near"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 < self.active_fraction <= 1.0:
            raise ConfigError(
                f"active_fraction must be in (0, 1], got {self.active_fraction}"
            )
        if self.active_share + self.expired_share > 1.0:
            raise ConfigError("active_share + expired_share must not exceed 1")
        for name in ("n_users", "n_items", "n_categories", "seq_len",
                     "impressions_per_user", "clusters_per_user"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.favorites_per_cluster < 0:
            raise ConfigError("favorites_per_cluster must not be negative")
        if not 0 <= self.fresh_slots <= self.seq_len:
            raise ConfigError(
                f"fresh_slots must be in [0, seq_len], got {self.fresh_slots}"
            )


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> dict:
    """Write train/eval impression files plus vocabularies; returns counts.

    Per user: pick disjoint active and expired cluster sets.  History slots
    run oldest to newest; the oldest ``1 - active_fraction`` of slots draws
    from expired clusters (era by era) with occasional revisits of active
    ones, the first half of the remaining tail walks the active clusters era
    by era, and the newest slots mix all active clusters so a short window
    reveals the whole active set.  Targets are exposed from a mix of active,
    expired, and uniform items; clicks follow p_click_in / p_click_out on
    the target's category.

    With ``favorites_per_cluster`` > 0 each cluster additionally carries a
    few per-user signature items that its slots repeat at ``favorite_rate``,
    and clicks become item-level: active signature items click at
    p_click_in, other active-category items at p_click_near, everything
    else at p_click_out.  The newest ``fresh_slots`` positions stay
    signature-free, so the habit evidence sits behind the recent browsing
    context and can only be read back out of deep history.
    """
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    item_category = np.zeros(spec.n_items + 1, dtype=np.int64)
    item_category[1:] = rng.integers(1, spec.n_categories + 1, spec.n_items)
    by_category = [np.flatnonzero(item_category == c) for c in range(spec.n_categories + 1)]
    for c in range(1, spec.n_categories + 1):
        if len(by_category[c]) == 0:
            raise ConfigError(
                f"category {c} received no items; raise n_items or lower n_categories"
            )

    Vocabulary.identity("item", spec.n_items).save(out_dir / "vocab_item.tsv")
    Vocabulary.identity("category", spec.n_categories).save(out_dir / "vocab_category.tsv")

    def draw_from(cat: int) -> int:
        pool = by_category[cat]
        return int(pool[rng.integers(len(pool))])

    m = spec.clusters_per_user
    L = spec.seq_len
    favs = spec.favorites_per_cluster
    if favs:
        smallest = min(len(by_category[c]) for c in range(1, spec.n_categories + 1))
        if favs > smallest:
            raise ConfigError(
                f"favorites_per_cluster = {favs} exceeds the smallest category "
                f"pool ({smallest} items); raise n_items or lower the knob"
            )
    counts = {"train": 0, "eval": 0, "clicks_in": 0, "shows_in": 0,
              "clicks_out": 0, "shows_out": 0}
    train_path = out_dir / "train.tsv"
    eval_path = out_dir / "eval.tsv"
    with open(train_path, "w", encoding="utf-8") as train_fh, \
            open(eval_path, "w", encoding="utf-8") as eval_fh:
        def cluster_item(clusters, favorites, idx: int, t: int) -> int:
            seasoned = t < L - spec.fresh_slots
            if favs and seasoned and rng.random() < spec.favorite_rate:
                return int(favorites[idx][rng.integers(favs)])
            return draw_from(int(clusters[idx]))

        def expose_from(clusters, favorites) -> int:
            idx = int(rng.integers(m))
            if favs and rng.random() < spec.favorite_exposure:
                return int(favorites[idx][rng.integers(favs)])
            return draw_from(int(clusters[idx]))

        for user in range(1, spec.n_users + 1):
            cats = rng.choice(spec.n_categories, size=2 * m, replace=False) + 1
            active, expired = cats[:m], cats[m:]
            active_set = set(int(c) for c in active)
            if favs:
                fav_active = [rng.choice(by_category[int(c)], size=favs, replace=False)
                              for c in active]
                fav_expired = [rng.choice(by_category[int(c)], size=favs, replace=False)
                               for c in expired]
                fav_set = {int(i) for row in fav_active for i in row}
            else:
                fav_active = fav_expired = fav_set = None

            items = np.empty(L, dtype=np.int64)
            expired_end = int(L * (1.0 - spec.active_fraction))
            era_end = expired_end + (L - expired_end) // 2
            for t in range(L):
                r = rng.random()
                if r < spec.noise_rate:
                    items[t] = rng.integers(1, spec.n_items + 1)
                elif t < expired_end:
                    if rng.random() < spec.recur_rate:
                        items[t] = cluster_item(active, fav_active,
                                                int(rng.integers(m)), t)
                    else:
                        era = min(t * m // max(expired_end, 1), m - 1)
                        items[t] = cluster_item(expired, fav_expired, era, t)
                elif t < era_end:
                    era = min((t - expired_end) * m // max(era_end - expired_end, 1),
                              m - 1)
                    items[t] = cluster_item(active, fav_active, era, t)
                else:
                    items[t] = cluster_item(active, fav_active,
                                            int(rng.integers(m)), t)
            behavior_blob = ",".join(
                f"{items[t]}:{item_category[items[t]]}:{t + 1}" for t in range(L)
            )

            n_train = int(round(spec.impressions_per_user * spec.train_fraction))
            for k in range(spec.impressions_per_user):
                r = rng.random()
                if r < spec.active_share:
                    target = expose_from(active, fav_active)
                elif r < spec.active_share + spec.expired_share:
                    target = expose_from(expired, fav_expired)
                else:
                    target = int(rng.integers(1, spec.n_items + 1))
                in_cluster = int(item_category[target]) in active_set
                if favs:
                    p = (spec.p_click_in if target in fav_set
                         else spec.p_click_near if in_cluster
                         else spec.p_click_out)
                else:
                    p = spec.p_click_in if in_cluster else spec.p_click_out
                label = int(rng.random() < p)
                key = "in" if in_cluster else "out"
                counts[f"shows_{key}"] += 1
                counts[f"clicks_{key}"] += label
                line = (f"{user}\t{target}\t{item_category[target]}\t{label}\t"
                        f"{target}\t{behavior_blob}\n")
                if k < n_train:
                    train_fh.write(line)
                    counts["train"] += 1
                else:
                    eval_fh.write(line)
                    counts["eval"] += 1
    log.info("synthetic data: %s", counts)
    return counts
