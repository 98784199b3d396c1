"""Latency and complexity measurements for the retrieval families.

Three experiments live here, all timed single-threaded with warmup runs
excluded and medians over repeated passes:

* per-behavior scoring cost for every kernel, swept over the attention
  width to show which methods are width-free and which scale with it;
* total retrieval time as a function of the history length, with a
  least-squares linearity check;
* end-to-end candidate scoring for the generative model against a full
  target-attention pipeline, on user-grouped batches where target-independent
  stages are computed once per user and reused across that user's candidates
  (target attention has to rescore the whole history per candidate, which is
  exactly the cost difference being measured).

Timing loops auto-scale their inner repetition count when a single pass is
too fast for the clock, so nanosecond-scale kernels are still measurable.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import baselines
from .config import Config
from .errors import ConfigError
from .metrics import AucAccumulator
from .model import GenLIModel
from .retrieval import retrieve_batch, topk_from_scores

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - dependency is declared, belt and braces
    threadpool_limits = None

SCORING_CSV_HEADER = "method,L,d_h,ns_per_behavior,total_ms"
STATS_CSV_HEADER = "method,L,d_h,m,reps,median_ns,mean_ns,p99_ns,total_ms"
SCALING_CSV_HEADER = "L,reps,median_ms,mean_ms,ns_per_behavior"
LATENCY_CSV_HEADER = "method,users,candidates,L,rep,ms"


def single_thread():
    """Context manager pinning BLAS pools to one thread for stable timings."""
    if threadpool_limits is None:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def _time_workload(fn: Callable[[], None], reps: int,
                   min_seconds: float = 1e-3) -> list[float]:
    """Seconds per single ``fn()`` call, one entry per repetition.

    The first (calibration) pass is discarded as warmup; if one pass is
    shorter than ``min_seconds`` the workload is looped enough times per
    repetition to pass the clock's resolution comfortably.
    """
    start = time.perf_counter()
    fn()
    once = time.perf_counter() - start
    inner = max(1, math.ceil(min_seconds / max(once, 1e-9)))
    out = []
    for _ in range(reps):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        out.append((time.perf_counter() - start) / inner)
    return out


@dataclasses.dataclass
class BenchResult:
    """One method's per-behavior scoring cost at one configuration."""

    method: str
    length: int
    head_dim: int
    hash_bits: int | None
    reps: int
    median_ns: float
    mean_ns: float
    p99_ns: float
    total_ms: float  # median time for one full pass over the sequence


# -- per-call scoring workloads -------------------------------------------


class _AccumulateCall:
    """Average pooling has no per-behavior score; its per-behavior cost is
    one accumulation, which is what this adapter times."""

    def __init__(self, dim: int):
        self.acc = [0.0] * dim

    def score_one(self, vec: list[float]) -> float:
        acc = self.acc
        for i, v in enumerate(vec):
            acc[i] += v
        return 0.0


def _per_call_workload(method: str, length: int, head_dim: int, hash_bits: int,
                       hash_rounds: int, n_buckets: int,
                       rng: np.random.Generator) -> tuple[Callable[[], None], int | None]:
    """Build (closure scoring `length` behaviors one call at a time, m)."""
    vecs = rng.standard_normal((length, head_dim))
    target = rng.standard_normal(head_dim)
    m: int | None = None
    if method == "genli_lookup":
        p = rng.random(n_buckets)
        kern = baselines.LookupKernel(p / p.sum())
        args: list = rng.integers(0, 10 * n_buckets, length).tolist()
    elif method == "sim_soft":
        kern = baselines.InnerProductKernel(target)
        args = vecs.tolist()
    elif method == "sim_hard":
        kern = baselines.HardCategoryKernel(3)
        args = rng.integers(0, 30, length).tolist()
    elif method == "eta_simhash":
        m = hash_bits
        kern = baselines.SimHashKernel(head_dim, hash_bits, rng)
        kern.prepare_target(target)
        args = [int(s) for s in kern.signature_all(vecs)]
    elif method == "sdim_collision":
        m = hash_bits
        kern = baselines.CollisionKernel(head_dim, hash_bits, hash_rounds, rng)
        kern.prepare_target(target)
        args = [tuple(row) for row in kern.buckets_all(vecs).tolist()]
    elif method == "twin_attention":
        kern = baselines.TwinAttentionKernel(head_dim, head_dim, rng)
        kern.prepare_target(target)
        args = kern.project_keys(vecs).tolist()
    elif method == "avg_pool":
        kern = _AccumulateCall(head_dim)
        args = vecs.tolist()
    else:
        raise ConfigError(f"unknown scoring method {method!r}")

    score = kern.score_one

    def run() -> None:
        for a in args:
            score(a)

    return run, m


def bench_scoring(methods: Sequence[str], length: int,
                  head_dims: Sequence[int], hash_bits: int, hash_rounds: int,
                  n_buckets: int, reps: int, seed: int) -> list[BenchResult]:
    """Per-behavior scoring cost for each method at each attention width.

    Scores are produced one honest call at a time (python-level, loop
    overhead included identically for every method) so the comparison
    captures per-call cost, not vectorization quality.
    """
    results = []
    with single_thread():
        for method_index, method in enumerate(methods):
            for head_dim in head_dims:
                rng = np.random.default_rng((seed, method_index, head_dim))
                run, m = _per_call_workload(
                    method, length, head_dim, hash_bits, hash_rounds, n_buckets, rng
                )
                secs = np.array(_time_workload(run, reps))
                per_behavior_ns = secs * 1e9 / length
                results.append(BenchResult(
                    method=method, length=length, head_dim=head_dim,
                    hash_bits=m, reps=reps,
                    median_ns=float(np.median(per_behavior_ns)),
                    mean_ns=float(per_behavior_ns.mean()),
                    p99_ns=float(np.percentile(per_behavior_ns, 99)),
                    total_ms=float(np.median(secs) * 1e3),
                ))
    return results


# -- retrieval scaling -----------------------------------------------------


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line y = slope*x + intercept and its R²."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot


@dataclasses.dataclass
class ScalingResult:
    lengths: tuple[int, ...]
    median_ms: tuple[float, ...]
    mean_ms: tuple[float, ...]
    reps: int
    slope: float
    intercept: float
    r2: float


def bench_retrieval_scaling(lengths: Sequence[int], n_buckets: int, k: int,
                            reps: int, seed: int) -> ScalingResult:
    """Total lookup-retrieval time (scoring + top-k) across history lengths."""
    rng = np.random.default_rng(seed)
    p = rng.random((1, n_buckets))
    p /= p.sum()
    medians, means = [], []
    with single_thread():
        for length in lengths:
            ids = rng.integers(1, 10 * n_buckets, (1, length))
            mask = np.ones((1, length), dtype=bool)

            def run() -> None:
                retrieve_batch(ids, mask, p, k)

            secs = np.array(_time_workload(run, reps))
            medians.append(float(np.median(secs) * 1e3))
            means.append(float(secs.mean() * 1e3))
    slope, intercept, r2 = linear_fit_r2(list(lengths), medians)
    return ScalingResult(tuple(lengths), tuple(medians), tuple(means), reps,
                         slope, intercept, r2)


# -- end-to-end candidate scoring -----------------------------------------


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _np_softmax(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def _np_mha(query: np.ndarray, keys: np.ndarray, values: np.ndarray,
            wq: np.ndarray, wk: np.ndarray, wv: np.ndarray, wo: np.ndarray,
            heads: int, head_dim: int,
            mask: np.ndarray | None = None) -> np.ndarray:
    """Plain-array mirror of nn.MultiHeadAttention.__call__."""
    b, n_q, _ = query.shape
    n_k = keys.shape[1]

    def split(x: np.ndarray, n: int) -> np.ndarray:
        return x.reshape(b, n, heads, head_dim).swapaxes(1, 2)

    q = split(query @ wq, n_q)
    k = split(keys @ wk, n_k)
    v = split(values @ wv, n_k)
    scores = (q @ k.swapaxes(-1, -2)) / math.sqrt(head_dim)
    key_mask = None if mask is None else mask[:, None, None, :]
    weights = _np_softmax(scores, key_mask)
    merged = (weights @ v).swapaxes(1, 2).reshape(b, n_q, heads * head_dim)
    return merged @ wo


def _np_mlp(x: np.ndarray, layers: list[tuple]) -> np.ndarray:
    for w, bias, slope in layers:
        x = x @ w + bias
        if slope is not None:
            x = np.where(x < 0, slope * x, x)
    return x


class _ServingBase:
    """Shared numpy inference pieces: embeddings, short-term feature, CTR head.

    Parameters are copied out of a trained (or freshly initialized) model
    once, optionally cast down to float32 to mimic serving precision.
    """

    def __init__(self, model: GenLIModel, dtype=np.float32):
        self.cfg = model.cfg
        self.dtype = dtype
        self.heads = model.cfg.heads
        self.head_dim = model.cfg.head_dim
        self._store = model.store
        g = self._get = lambda name: model.store[name].data.astype(dtype)
        self.item_rows = g("embedding/item")
        self.cat_rows = g("embedding/category")
        self.short = tuple(g(f"short_term/{p}") for p in ("Wq", "Wk", "Wv", "Wo"))
        self.ctr_layers = self._mlp_layers("ctr")
        self.stage_ms: dict[str, float] = {}

    def _mlp_layers(self, name: str) -> list[tuple]:
        layers = []
        i = 0
        while f"{name}/layer{i}/W" in self._store.params:
            w = self._get(f"{name}/layer{i}/W")
            b = self._get(f"{name}/layer{i}/b")
            slope_name = f"{name}/layer{i}/slope"
            slope = (float(self._get(slope_name)[0, 0])
                     if slope_name in self._store.params else None)
            layers.append((w, b, slope))
            i += 1
        return layers

    def _embed(self, items: np.ndarray, cats: np.ndarray) -> np.ndarray:
        return np.concatenate([self.item_rows[items], self.cat_rows[cats]], axis=-1)

    def _stage(self, name: str, start: float) -> float:
        now = time.perf_counter()
        self.stage_ms[name] = self.stage_ms.get(name, 0.0) + (now - start) * 1e3
        return now

    def _ctr(self, x_l: np.ndarray, window_emb: np.ndarray, window_mask: np.ndarray,
             target_emb: np.ndarray) -> np.ndarray:
        """Short-term attention + prediction MLP; shapes (U*C, ...) flattened."""
        x_s = _np_mha(target_emb[:, None, :], window_emb, window_emb,
                      *self.short, self.heads, self.head_dim, window_mask)
        features = np.concatenate(
            [x_l, x_s[:, 0, :], target_emb], axis=-1
        )
        return _stable_sigmoid(_np_mlp(features, self.ctr_layers))[:, 0]


class GenLIServing(_ServingBase):
    """Candidate scoring the generative way: distributions and retrieval once
    per user, then only fusion + CTR per candidate."""

    def __init__(self, model: GenLIModel, dtype=np.float32):
        super().__init__(model, dtype)
        g = self._get
        self.kinds = model.kinds
        self.gen = {}
        for kind in model.heads_by_kind:
            base = f"interest/{kind}"
            self.gen[kind] = {
                "attention": tuple(g(f"{base}/attention/{p}")
                                   for p in ("Wq", "Wk", "Wv", "Wo")),
                "probe": g(f"{base}/probe"),
                "combine": g(f"{base}/combine"),
                "mlp": self._mlp_layers(f"{base}/mlp"),
            }
        self.agg = {
            kind: tuple(g(f"fusion/{kind}/{p}") for p in ("Wq", "Wk", "Wv", "Wo"))
            for kind in self.kinds
        }
        self.gate_hidden = (g("fusion/gate/hidden/W"), g("fusion/gate/hidden/b"),
                            float(g("fusion/gate/hidden/slope")[0, 0]))
        self.gate_out = (g("fusion/gate/out/W"), g("fusion/gate/out/b"))
        self.project = g("fusion/project")
        self.n_buckets = model.cfg.n_buckets

    def _distributions(self, window_emb: np.ndarray,
                       window_mask: np.ndarray) -> dict[str, np.ndarray]:
        u = window_emb.shape[0]
        out = {}
        for kind, params in self.gen.items():
            newest = window_emb[:, :1, :]
            probe = np.broadcast_to(params["probe"][None, :, :],
                                    (u, 1, window_emb.shape[2]))
            queries = np.concatenate([newest, probe], axis=1)
            att = _np_mha(queries, window_emb, window_emb, *params["attention"],
                          self.heads, self.head_dim, window_mask)
            hidden = att.reshape(u, 2 * self.head_dim) @ params["combine"]
            out[kind] = _np_softmax(_np_mlp(hidden, params["mlp"]))
        if "relative" in self.kinds:
            out["relative"] = _np_softmax(out["explicit"] - out["implicit"])
        return out

    def score_candidates(self, seq_items: np.ndarray, seq_cats: np.ndarray,
                         seq_mask: np.ndarray, cand_items: np.ndarray,
                         cand_cats: np.ndarray) -> np.ndarray:
        """(U, L) histories and (U, C) candidates -> (U, C) click scores."""
        self.stage_ms = {}
        u, n_cand = cand_items.shape
        l = self.cfg.window
        k = self.cfg.top_k
        tick = time.perf_counter()

        window_emb = self._embed(seq_items[:, :l], seq_cats[:, :l])
        window_mask = seq_mask[:, :l]
        dists = self._distributions(window_emb, window_mask)
        tick = self._stage("interest_generation", tick)

        selected = {}
        for kind in self.kinds:
            scores = dists[kind][np.arange(u)[:, None], seq_items % self.n_buckets]
            pos, _ = topk_from_scores(scores, seq_mask, k)
            # newest-first key order, padding last: the exact order the
            # training-graph fusion sees, so float64 serving is bit-compatible
            good = pos >= 0
            order = np.argsort(np.where(good, pos, np.iinfo(np.int64).max),
                               axis=1, kind="stable")
            pos = np.take_along_axis(pos, order, axis=1)
            good = pos >= 0
            safe = np.where(good, pos, 0)
            items_k = np.take_along_axis(seq_items, safe, axis=1) * good
            cats_k = np.take_along_axis(seq_cats, safe, axis=1) * good
            selected[kind] = (self._embed(items_k, cats_k), good)
        tick = self._stage("retrieval", tick)

        target_emb = self._embed(cand_items, cand_cats)        # (U, C, d)
        flat_target = target_emb.reshape(u * n_cand, -1)
        summaries = []
        for kind in self.kinds:
            keys, good = selected[kind]
            # queries: every candidate of the user attends the same k keys
            att = _np_mha(target_emb, keys, keys, *self.agg[kind],
                          self.heads, self.head_dim, good)     # (U, C, d_h)
            summaries.append(att.reshape(u * n_cand, self.head_dim))
        z = np.concatenate(summaries, axis=-1) if len(summaries) > 1 else summaries[0]
        w, b, slope = self.gate_hidden
        hidden = z @ w + b
        hidden = np.where(hidden < 0, slope * hidden, hidden)
        gate = _stable_sigmoid(hidden @ self.gate_out[0] + self.gate_out[1])
        x_l = (gate * z) @ self.project
        tick = self._stage("fusion", tick)

        window_flat = np.repeat(window_emb, n_cand, axis=0)
        mask_flat = np.repeat(window_mask, n_cand, axis=0)
        probs = self._ctr(x_l, window_flat, mask_flat, flat_target)
        self._stage("ctr", tick)
        return probs.reshape(u, n_cand)


class TwinServing(_ServingBase):
    """Candidate scoring with full target attention: every candidate rescans
    the whole history.  Key projections are target-independent and computed
    once per user, which is the most this family can amortize."""

    def __init__(self, model: GenLIModel, dtype=np.float32,
                 rng: np.random.Generator | None = None):
        super().__init__(model, dtype)
        rng = rng or np.random.default_rng(model.cfg.seed + 1)
        d = self.item_rows.shape[1] + self.cat_rows.shape[1]
        h, d_h = self.heads, self.head_dim
        scale = 1.0 / math.sqrt(d)
        self.w_query = (rng.standard_normal((d, d_h)) * scale).astype(dtype)
        self.w_key = (rng.standard_normal((d, d_h)) * scale).astype(dtype)
        self.esu = tuple(
            (rng.standard_normal((d, h * d_h)) * scale).astype(dtype)
            for _ in range(3)
        ) + ((rng.standard_normal((h * d_h, d_h)) / math.sqrt(h * d_h)).astype(dtype),)
        self.select_k = model.cfg.top_k * 3   # same retrieval budget as GenLI

    def score_candidates(self, seq_items: np.ndarray, seq_cats: np.ndarray,
                         seq_mask: np.ndarray, cand_items: np.ndarray,
                         cand_cats: np.ndarray) -> np.ndarray:
        self.stage_ms = {}
        u, n_cand = cand_items.shape
        length = seq_items.shape[1]
        l = self.cfg.window
        kk = min(self.select_k, length)
        tick = time.perf_counter()

        seq_emb = self._embed(seq_items, seq_cats)               # (U, L, d)
        keys = seq_emb @ self.w_key                              # once per user
        tick = self._stage("key_projection", tick)

        target_emb = self._embed(cand_items, cand_cats)          # (U, C, d)
        queries = (target_emb @ self.w_query) / math.sqrt(self.head_dim)
        scores = np.einsum("ucd,uld->ucl", queries, keys)        # (U, C, L)
        if not seq_mask.all():
            scores[~seq_mask[:, None, :].repeat(n_cand, axis=1)] = -np.inf
        flat = scores.reshape(u * n_cand, length)
        pos = np.argpartition(-flat, kk - 1, axis=1)[:, :kk]     # (U*C, K)
        good = np.take_along_axis(flat, pos, axis=1) > -np.inf
        tick = self._stage("scoring_selection", tick)

        gathered = seq_emb[
            np.repeat(np.arange(u), n_cand)[:, None], pos
        ] * good[..., None]                                      # (U*C, K, d)
        flat_target = target_emb.reshape(u * n_cand, 1, -1)
        x_l = _np_mha(flat_target, gathered, gathered, *self.esu,
                      self.heads, self.head_dim, good)[:, 0, :]
        tick = self._stage("aggregation", tick)

        window_flat = np.repeat(seq_emb[:, :l], n_cand, axis=0)
        mask_flat = np.repeat(seq_mask[:, :l], n_cand, axis=0)
        probs = self._ctr(x_l, window_flat, mask_flat, flat_target[:, 0, :])
        self._stage("ctr", tick)
        return probs.reshape(u, n_cand)


@dataclasses.dataclass
class LatencyResult:
    users: int
    candidates: int
    length: int
    reps: int
    ms_by_method: dict[str, list[float]]
    stage_ms: dict[str, dict[str, float]]

    def median_ms(self, method: str) -> float:
        return float(np.median(self.ms_by_method[method]))


def bench_latency_compare(model: GenLIModel, length: int, users: int,
                          batch: int, reps: int, seed: int,
                          dtype=np.float32) -> LatencyResult:
    """End-to-end candidate scoring time, generative vs full target attention.

    The batch is ``users`` histories x ``batch // users`` candidates each,
    identical inputs for both paths.  Inputs (ids, masks) are materialized
    before any clock starts.
    """
    if batch % users:
        raise ConfigError(f"bench_batch ({batch}) must divide evenly into "
                          f"bench_users ({users})")
    n_cand = batch // users
    rng = np.random.default_rng(seed)
    n_items = model.embedder.items.vocab_size
    n_cats = model.embedder.categories.vocab_size
    seq_items = rng.integers(1, n_items, (users, length))
    seq_cats = rng.integers(1, n_cats, (users, length))
    seq_mask = np.ones((users, length), dtype=bool)
    cand_items = rng.integers(1, n_items, (users, n_cand))
    cand_cats = rng.integers(1, n_cats, (users, n_cand))
    args = (seq_items, seq_cats, seq_mask, cand_items, cand_cats)

    paths = {"genli": GenLIServing(model, dtype), "twin": TwinServing(model, dtype)}
    ms_by_method: dict[str, list[float]] = {}
    stage_ms: dict[str, dict[str, float]] = {}
    with single_thread():
        for name, serving in paths.items():
            secs = _time_workload(lambda: serving.score_candidates(*args), reps)
            ms_by_method[name] = [s * 1e3 for s in secs]
            stage_ms[name] = dict(serving.stage_ms)
    return LatencyResult(users, n_cand, length, reps, ms_by_method, stage_ms)


# -- evaluation ------------------------------------------------------------


def eval_model(model, ds, batch_size: int = 1024) -> tuple[float, dict[str, float], int]:
    """Dataset AUC plus accumulated per-stage forward times in seconds."""
    acc = AucAccumulator()
    timings: dict[str, float] = {}
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        batch = ds.batch(idx)
        acc.add(model.predict(batch, timings), batch["label"])
    return acc.value(), timings, acc.count


# -- CSV / plot emission ---------------------------------------------------


def scoring_csv(results: Sequence[BenchResult]) -> str:
    lines = [SCORING_CSV_HEADER]
    for r in results:
        lines.append(f"{r.method},{r.length},{r.head_dim},"
                     f"{r.median_ns:.1f},{r.total_ms:.4f}")
    return "\n".join(lines) + "\n"


def stats_csv(results: Sequence[BenchResult]) -> str:
    lines = [STATS_CSV_HEADER]
    for r in results:
        m = str(r.hash_bits or 0)  # 0 marks methods with no signature
        lines.append(f"{r.method},{r.length},{r.head_dim},{m},{r.reps},"
                     f"{r.median_ns:.1f},{r.mean_ns:.1f},{r.p99_ns:.1f},"
                     f"{r.total_ms:.4f}")
    return "\n".join(lines) + "\n"


def scaling_csv(result: ScalingResult) -> str:
    lines = [SCALING_CSV_HEADER]
    for length, med, mean in zip(result.lengths, result.median_ms, result.mean_ms):
        ns = med * 1e6 / length
        lines.append(f"{length},{result.reps},{med:.4f},{mean:.4f},{ns:.1f}")
    return "\n".join(lines) + "\n"


def latency_csv(result: LatencyResult) -> str:
    lines = [LATENCY_CSV_HEADER]
    for method, values in result.ms_by_method.items():
        for rep, ms in enumerate(values):
            lines.append(f"{method},{result.users},{result.candidates},"
                         f"{result.length},{rep},{ms:.3f}")
    return "\n".join(lines) + "\n"


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def emit_plots(out_dir: str | Path) -> list[Path]:
    """Render charts for whichever benchmark CSVs exist in ``out_dir``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    written = []

    path = out_dir / "bench_scoring.csv"
    if path.exists():
        _, rows = _read_csv(path)
        by_method: dict[str, list[tuple[int, float]]] = {}
        for method, _, d_h, ns, _ in rows:
            by_method.setdefault(method, []).append((int(d_h), float(ns)))
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for method, pts in sorted(by_method.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=method)
        ax.set_xlabel("attention width d_h")
        ax.set_ylabel("ns per behavior (median)")
        ax.set_yscale("log")
        ax.set_title("Per-behavior scoring cost vs attention width")
        ax.legend(fontsize=8)
        fig.tight_layout()
        target = out_dir / "bench_scoring.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    path = out_dir / "bench_scaling.csv"
    if path.exists():
        _, rows = _read_csv(path)
        lengths = [int(r[0]) for r in rows]
        medians = [float(r[2]) for r in rows]
        slope, intercept, r2 = linear_fit_r2(lengths, medians)
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.plot(lengths, medians, marker="o", label="measured")
        ax.plot(lengths, [slope * x + intercept for x in lengths], "--",
                label=f"linear fit (R²={r2:.4f})")
        ax.set_xlabel("history length L")
        ax.set_ylabel("retrieval time per pass (ms, median)")
        ax.set_title("Lookup retrieval time vs history length")
        ax.legend()
        fig.tight_layout()
        target = out_dir / "bench_scaling.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    path = out_dir / "bench_latency.csv"
    if path.exists():
        _, rows = _read_csv(path)
        by_method: dict[str, list[float]] = {}
        for method, _, _, _, _, ms in rows:
            by_method.setdefault(method, []).append(float(ms))
        fig, ax = plt.subplots(figsize=(5, 4.5))
        names = sorted(by_method)
        med = [float(np.median(by_method[n])) for n in names]
        ax.bar(names, med)
        for i, (name, value) in enumerate(zip(names, med)):
            ax.text(i, value, f"{value:.1f} ms", ha="center", va="bottom")
        ax.set_ylabel("batch latency (ms, median)")
        ax.set_title("End-to-end candidate scoring")
        fig.tight_layout()
        target = out_dir / "bench_latency.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    return written
