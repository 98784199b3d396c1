"""Full click-through-rate models.

``CtrModelBase`` owns everything the compared models share: embeddings, the
short-term target attention, and the final prediction MLP.  Subclasses only
differ in how they turn the long behavior history into the long-term
interest feature, which keeps accuracy comparisons honest.

``GenLIModel`` is the production path: generate interest distributions from
the recent window once per user, score every behavior by constant-time
lookup, retrieve top-k per distribution, and fuse the selections against the
target.  Distribution generation never sees the target, so its output (and
the retrieval) can be shared across all candidates scored for a user.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np

from . import nn
from .config import Config
from .embedding import BehaviorEmbedder
from .errors import DataError
from .fusion import InterestFusion
from .interest import InterestHead, explicit_loss, implicit_loss, relative_distribution
from .retrieval import RetrievalResult, retrieve_all

KIND_ORDER = ("implicit", "explicit", "relative")


@contextmanager
def _timed(timings: dict | None, stage: str):
    if timings is None:
        yield
        return
    start = time.perf_counter()
    yield
    timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - start


class CtrModelBase:
    """Embeddings, short-term feature, and prediction head shared by all models."""

    def __init__(self, cfg: Config, n_items: int, n_categories: int):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.store = nn.ParameterStore()
        self.embedder = BehaviorEmbedder(
            self.store, n_items, n_categories, cfg.dim_item, cfg.dim_category, self.rng
        )
        d = self.embedder.width
        self.short_attention = nn.MultiHeadAttention(
            self.store, "short_term", d, d, cfg.heads, cfg.head_dim, self.rng
        )
        ctr_in = self.long_term_width() + cfg.head_dim + d
        self.ctr_mlp = nn.MLP(self.store, "ctr", [ctr_in, *cfg.ctr_hidden, 1], self.rng)

    # subclasses say how wide their long-term feature is and how to build it
    def long_term_width(self) -> int:
        raise NotImplementedError

    def long_term_feature(self, batch: dict, target_emb: nn.Tensor,
                          timings: dict | None) -> nn.Tensor:
        raise NotImplementedError

    def _window(self, batch: dict) -> tuple[nn.Tensor, np.ndarray]:
        l = self.cfg.window
        wemb = self.embedder(batch["items"][:, :l], batch["categories"][:, :l])
        return wemb, batch["mask"][:, :l]

    def forward(self, batch: dict, timings: dict | None = None) -> nn.Tensor:
        """Click probability for each sample in the batch, shape (B, 1)."""
        empty = ~batch["mask"].any(axis=1)
        if empty.any():
            user = int(batch["user"][int(np.flatnonzero(empty)[0])])
            raise DataError(f"user {user} has no behaviors")
        b = batch["items"].shape[0]
        t_emb = self.embedder(batch["target_item"], batch["target_category"])
        t_emb3 = t_emb.reshape(b, 1, self.embedder.width)
        x_l = self.long_term_feature(batch, t_emb3, timings)
        with _timed(timings, "ctr"):
            wemb, w_mask = self._window(batch)
            x_s = self.short_attention(t_emb3, wemb, wemb, w_mask)
            x_s = x_s.reshape(b, self.cfg.head_dim)
            features = nn.concat([x_l, x_s, t_emb], axis=-1)
            return self.ctr_mlp(features).sigmoid()

    def auxiliary_losses(self, batch: dict) -> dict[str, nn.Tensor]:
        return {}

    def loss(self, batch: dict) -> tuple[nn.Tensor, dict[str, float]]:
        """Total training loss and float components for reporting."""
        y_hat = self.forward(batch)
        y = nn.Tensor(batch["label"].reshape(-1, 1))
        ctr = -(y * y_hat.log() + (1.0 - y) * (1.0 - y_hat).log()).mean()
        total = ctr
        parts = {"loss_ctr": float(ctr.data)}
        aux = self.auxiliary_losses(batch)
        for name, weight in (("implicit", self.cfg.alpha), ("explicit", self.cfg.beta)):
            if name in aux:
                total = total + aux[name] * weight
                parts[f"loss_{name}"] = float(aux[name].data)
            else:
                parts[f"loss_{name}"] = 0.0
        parts["loss_total"] = float(total.data)
        return total, parts

    def predict(self, batch: dict, timings: dict | None = None) -> np.ndarray:
        with nn.no_grad():
            return self.forward(batch, timings).data.reshape(-1)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.store.params.values())


class GenLIModel(CtrModelBase):
    """Generative interest distributions + lookup retrieval + gated fusion."""

    def __init__(self, cfg: Config, n_items: int, n_categories: int):
        self.kinds = tuple(k for k in KIND_ORDER if k in cfg.interest_kinds)
        super().__init__(cfg, n_items, n_categories)
        d = self.embedder.width
        need_heads = [k for k in ("implicit", "explicit") if k in self.kinds]
        self.heads_by_kind = {
            kind: InterestHead(
                self.store, f"interest/{kind}", d, cfg.heads, cfg.head_dim,
                cfg.mlp_hidden, cfg.n_buckets, self.rng,
            )
            for kind in need_heads
        }
        self.fusion = InterestFusion(
            self.store, "fusion", d, cfg.heads, cfg.head_dim, self.kinds, self.rng
        )
        self._last_distributions: dict[str, nn.Tensor] = {}
        self.last_retrieval: RetrievalResult | None = None

    def long_term_width(self) -> int:
        return self.cfg.head_dim

    def distributions(self, batch: dict, timings: dict | None = None) -> dict[str, nn.Tensor]:
        """Interest distributions from the recent window only; (B, N) each.

        The target plays no part here, which is what makes the result
        shareable across every candidate scored for the same user.
        """
        with _timed(timings, "interest_generation"):
            wemb, w_mask = self._window(batch)
            out: dict[str, nn.Tensor] = {}
            for kind in ("implicit", "explicit"):
                if kind in self.heads_by_kind:
                    out[kind] = self.heads_by_kind[kind].generate_distribution(wemb, w_mask)
            if "relative" in self.kinds:
                out["relative"] = relative_distribution(out["explicit"], out["implicit"])
        self._last_distributions = out
        return out

    def retrieve(self, batch: dict, dists: dict[str, nn.Tensor],
                 timings: dict | None = None) -> RetrievalResult:
        """Top-k behaviors per kind over the full history; selection is a
        discrete step, so gradients flow through the chosen embeddings but
        not through the choosing."""
        with _timed(timings, "retrieval"):
            result = retrieve_all(
                batch["items"], batch["mask"],
                {k: p.data for k, p in dists.items() if k in self.kinds},
                self.cfg.top_k,
            )
        self.last_retrieval = result
        return result

    def long_term_feature(self, batch: dict, target_emb: nn.Tensor,
                          timings: dict | None) -> nn.Tensor:
        dists = self.distributions(batch, timings)
        retrieval = self.retrieve(batch, dists, timings)
        with _timed(timings, "fusion"):
            parts = []
            for kind in self.kinds:
                positions, _ = retrieval.by_kind[kind]
                sel_mask = positions >= 0
                # order selections oldest-last (newest first), padding at the end
                order = np.argsort(
                    np.where(sel_mask, positions, np.iinfo(np.int64).max),
                    axis=1, kind="stable",
                )
                positions = np.take_along_axis(positions, order, axis=1)
                sel_mask = positions >= 0
                safe = np.where(sel_mask, positions, 0)
                items = np.take_along_axis(batch["items"], safe, axis=1) * sel_mask
                cats = np.take_along_axis(batch["categories"], safe, axis=1) * sel_mask
                selected = self.embedder(items, cats)
                parts.append(self.fusion.aggregate(kind, selected, sel_mask, target_emb))
            return self.fusion.fuse(parts)

    def auxiliary_losses(self, batch: dict) -> dict[str, nn.Tensor]:
        from .data import surrogate_exposed

        dists = self._last_distributions
        out: dict[str, nn.Tensor] = {}
        if "explicit" in dists:
            out["explicit"] = explicit_loss(
                dists["explicit"], batch["target_item"], batch["label"]
            )
        if "implicit" in dists:
            exposed = surrogate_exposed(batch)
            out["implicit"] = implicit_loss(dists["implicit"], exposed)
        return out


def build_model(cfg: Config, n_items: int, n_categories: int) -> CtrModelBase:
    """Instantiate the configured model family."""
    if cfg.model == "genli":
        return GenLIModel(cfg, n_items, n_categories)
    from .baselines import AvgPoolModel, SimSoftModel

    if cfg.model == "avg_pool":
        return AvgPoolModel(cfg, n_items, n_categories)
    if cfg.model == "sim_soft":
        return SimSoftModel(cfg, n_items, n_categories)
    raise ValueError(f"unknown model {cfg.model!r}")
