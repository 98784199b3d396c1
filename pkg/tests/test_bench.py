"""Benchmark harness: serving-path equivalence, CSV schemas, and the
measurement plumbing.  Assertions about actual speed live in the
acceptance suite; here we only check the machinery is sound."""

import numpy as np
import pytest

from genli.baselines import SCORING_KERNELS
from genli.benchmark import (
    GenLIServing,
    TwinServing,
    bench_latency_compare,
    bench_retrieval_scaling,
    bench_scoring,
    emit_plots,
    eval_model,
    latency_csv,
    linear_fit_r2,
    scaling_csv,
    scoring_csv,
    stats_csv,
)
from genli.config import build_config
from genli.errors import ConfigError
from genli.model import GenLIModel

N_ITEMS, N_CATS = 90, 10


@pytest.fixture(scope="module")
def model():
    cfg = build_config({
        "seq_len": "50", "window": "6", "n_buckets": "128", "top_k": "4",
        "heads": "2", "head_dim": "6", "mlp_hidden": "16", "ctr_hidden": "16",
        "dim_item": "4", "dim_category": "4", "seed": "21",
    })
    return GenLIModel(cfg, N_ITEMS, N_CATS)


def serving_inputs(cfg, users=3, n_cand=5, seed=2, ragged=True):
    rng = np.random.default_rng(seed)
    length = cfg.seq_len
    seq_items = rng.integers(1, N_ITEMS, (users, length))
    seq_cats = rng.integers(1, N_CATS, (users, length))
    if ragged:
        lengths = rng.integers(cfg.window, length + 1, users)
    else:
        lengths = np.full(users, length)
    seq_mask = np.arange(length) < lengths[:, None]
    seq_items = np.where(seq_mask, seq_items, 0)
    seq_cats = np.where(seq_cats * seq_mask, seq_cats, 0)
    cand_items = rng.integers(1, N_ITEMS, (users, n_cand))
    cand_cats = rng.integers(1, N_CATS, (users, n_cand))
    return seq_items, seq_cats, seq_mask, cand_items, cand_cats, lengths


class TestServingEquivalence:
    def test_float64_serving_matches_training_graph(self, model):
        """The flat numpy serving path is the same arithmetic as the autodiff
        graph: identical selection sets, key order, and formulas.  The only
        daylight left is summation order inside differently-shaped matrix
        products (per-user amortized vs flat batch), so float64 agreement
        must hold to a few ulp."""
        cfg = model.cfg
        inputs = serving_inputs(cfg)
        seq_items, seq_cats, seq_mask, cand_items, cand_cats, lengths = inputs
        serving = GenLIServing(model, dtype=np.float64)
        served = serving.score_candidates(seq_items, seq_cats, seq_mask,
                                          cand_items, cand_cats)
        users, n_cand = cand_items.shape
        for u in range(users):
            batch = {
                "items": np.repeat(seq_items[u][None], n_cand, axis=0),
                "categories": np.repeat(seq_cats[u][None], n_cand, axis=0),
                "mask": np.repeat(seq_mask[u][None], n_cand, axis=0),
                "lengths": np.repeat(lengths[u], n_cand),
                "target_item": cand_items[u],
                "target_category": cand_cats[u],
                "label": np.zeros(n_cand),
                "exposed_item": np.full(n_cand, -1),
                "user": np.full(n_cand, u),
            }
            np.testing.assert_allclose(served[u], model.predict(batch),
                                       rtol=0, atol=1e-12)

    def test_float32_serving_stays_close(self, model):
        inputs = serving_inputs(model.cfg, seed=3)
        seq_items, seq_cats, seq_mask, cand_items, cand_cats, _ = inputs
        hi = GenLIServing(model, dtype=np.float64).score_candidates(
            seq_items, seq_cats, seq_mask, cand_items, cand_cats)
        lo = GenLIServing(model, dtype=np.float32).score_candidates(
            seq_items, seq_cats, seq_mask, cand_items, cand_cats)
        np.testing.assert_allclose(lo, hi, atol=1e-5)

    def test_twin_path_produces_valid_probabilities(self, model):
        inputs = serving_inputs(model.cfg, seed=4)
        seq_items, seq_cats, seq_mask, cand_items, cand_cats, _ = inputs
        out = TwinServing(model, dtype=np.float64).score_candidates(
            seq_items, seq_cats, seq_mask, cand_items, cand_cats)
        assert out.shape == cand_items.shape
        assert np.all((out > 0) & (out < 1))

    def test_stage_clocks_populated(self, model):
        inputs = serving_inputs(model.cfg, seed=5)
        serving = GenLIServing(model, dtype=np.float32)
        serving.score_candidates(*inputs[:5])
        assert set(serving.stage_ms) == {"interest_generation", "retrieval",
                                         "fusion", "ctr"}
        twin = TwinServing(model, dtype=np.float32)
        twin.score_candidates(*inputs[:5])
        assert set(twin.stage_ms) == {"key_projection", "scoring_selection",
                                      "aggregation", "ctr"}


class TestMeasurement:
    def test_linear_fit_recovers_exact_line(self):
        x = [1, 2, 4, 8]
        y = [3.0 + 0.5 * v for v in x]
        slope, intercept, r2 = linear_fit_r2(x, y)
        assert slope == pytest.approx(0.5)
        assert intercept == pytest.approx(3.0)
        assert r2 == pytest.approx(1.0)

    def test_linear_fit_reports_poor_fit(self):
        x = [1, 2, 3, 4, 5]
        y = [0.0, 1.0, 0.0, 1.0, 0.0]
        _, _, r2 = linear_fit_r2(x, y)
        assert r2 < 0.5

    def test_scoring_covers_every_method_and_dim(self):
        results = bench_scoring(SCORING_KERNELS, length=64, head_dims=(8, 16),
                                hash_bits=32, hash_rounds=4, n_buckets=64,
                                reps=2, seed=0)
        seen = {(r.method, r.head_dim) for r in results}
        assert seen == {(m, d) for m in SCORING_KERNELS for d in (8, 16)}
        for r in results:
            assert r.reps == 2
            assert r.median_ns > 0
            assert r.p99_ns >= r.median_ns or r.p99_ns == pytest.approx(r.median_ns)

    def test_scaling_result_shape(self):
        result = bench_retrieval_scaling((128, 256, 512), n_buckets=64, k=4,
                                         reps=2, seed=1)
        assert result.lengths == (128, 256, 512)
        assert len(result.median_ms) == 3
        assert all(m > 0 for m in result.median_ms)

    def test_latency_requires_even_split(self, model):
        with pytest.raises(ConfigError, match="divide evenly"):
            bench_latency_compare(model, length=32, users=3, batch=10,
                                  reps=1, seed=0)

    def test_latency_compare_runs(self, model):
        result = bench_latency_compare(model, length=32, users=2, batch=8,
                                       reps=2, seed=0)
        assert set(result.ms_by_method) == {"genli", "twin"}
        assert result.candidates == 4
        assert all(len(v) == 2 for v in result.ms_by_method.values())
        assert result.median_ms("genli") > 0


@pytest.fixture(scope="module")
def artifacts(model, tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    scoring = bench_scoring(SCORING_KERNELS[:3], length=64,
                            head_dims=(8,), hash_bits=32, hash_rounds=4,
                            n_buckets=64, reps=2, seed=0)
    scaling = bench_retrieval_scaling((128, 256), n_buckets=64, k=4,
                                      reps=2, seed=1)
    latency = bench_latency_compare(model, length=32, users=2, batch=8,
                                    reps=2, seed=0)
    (out / "bench_scoring.csv").write_text(scoring_csv(scoring))
    (out / "bench_stats.csv").write_text(stats_csv(scoring))
    (out / "bench_scaling.csv").write_text(scaling_csv(scaling))
    (out / "bench_latency.csv").write_text(latency_csv(latency))
    return out


class TestCsvAndPlots:
    def test_csv_headers(self, artifacts):
        def header(name):
            return (artifacts / name).read_text().splitlines()[0]

        assert header("bench_scoring.csv") == \
            "method,L,d_h,ns_per_behavior,total_ms"
        assert header("bench_stats.csv") == \
            "method,L,d_h,m,reps,median_ns,mean_ns,p99_ns,total_ms"
        assert header("bench_scaling.csv") == \
            "L,reps,median_ms,mean_ms,ns_per_behavior"
        assert header("bench_latency.csv") == "method,users,candidates,L,rep,ms"

    def test_csv_rows_parse_as_numbers(self, artifacts):
        for name in ("bench_scoring.csv", "bench_stats.csv",
                     "bench_scaling.csv", "bench_latency.csv"):
            lines = (artifacts / name).read_text().strip().splitlines()
            assert len(lines) >= 2
            width = len(lines[0].split(","))
            for line in lines[1:]:
                cells = line.split(",")
                assert len(cells) == width
                for cell in cells[1:]:
                    float(cell)  # every non-method column is numeric

    def test_emit_plots_renders_a_png_per_csv_family(self, artifacts):
        written = emit_plots(artifacts)
        names = {p.name for p in written}
        assert names == {"bench_scoring.png", "bench_scaling.png",
                         "bench_latency.png"}
        for p in written:
            assert p.stat().st_size > 1000
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestEvalModel:
    def test_returns_auc_timings_count(self, model):
        from genli.data import Dataset, Sample

        rng = np.random.default_rng(6)
        ds = Dataset(seq_len=model.cfg.seq_len)
        idx = ds.add_sequence(rng.integers(1, N_ITEMS, 50),
                              rng.integers(1, N_CATS, 50),
                              np.arange(50, 0, -1))
        for i in range(20):
            ds.samples.append(Sample(
                user=0, target_item=int(rng.integers(1, N_ITEMS)),
                target_category=int(rng.integers(1, N_CATS)),
                label=i % 2, exposed_item=-1, seq_index=idx,
            ))
        ds.finalize()
        value, timings, count = eval_model(model, ds, batch_size=7)
        assert 0.0 <= value <= 1.0
        assert count == 20
        assert timings  # per-stage clocks accumulated
