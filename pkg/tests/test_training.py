"""Training loop: loss bookkeeping, determinism, resume, abort, sampling."""

import math

import numpy as np
import pytest

from genli import nn
from genli.config import build_config
from genli.data import Dataset, Sample, generate_synthetic, load_dataset
from genli.errors import DataError, NumericalError
from genli.model import GenLIModel, build_model
from genli.training import (
    REPORT_COLUMNS,
    evaluate_auc,
    negative_sample,
    predict_dataset,
    train,
)


def tiny_config(**overrides):
    base = {
        "seq_len": "30", "window": "5", "n_buckets": "64", "top_k": "3",
        "heads": "2", "head_dim": "6", "mlp_hidden": "16", "ctr_hidden": "16",
        "dim_item": "4", "dim_category": "4", "batch_size": "32",
        "epochs": "2", "seed": "17",
        "n_users": "30", "impressions_per_user": "10", "n_items": "80",
        "n_categories": "8",
    }
    base.update({k: str(v) for k, v in overrides.items()})
    return build_config(base)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    cfg = tiny_config()
    out = tmp_path_factory.mktemp("tiny")
    from genli.config import synthetic_spec
    generate_synthetic(synthetic_spec(cfg), out)
    train_ds = load_dataset(out / "train.tsv", cfg.seq_len)
    eval_ds = load_dataset(out / "eval.tsv", cfg.seq_len)
    return cfg, train_ds, eval_ds


def fresh_model(cfg, train_ds, eval_ds):
    item_hi = max(train_ds.max_ids()[0], eval_ds.max_ids()[0])
    cat_hi = max(train_ds.max_ids()[1], eval_ds.max_ids()[1])
    return build_model(cfg, item_hi + 1, cat_hi + 1)


class TestLossClosedForm:
    def test_zeroed_model_gives_log_uniform_losses(self, tiny_data):
        """All-zero weights force uniform distributions and p=1/2, so each
        loss term hits its closed form: BCE ln 2, each auxiliary ln N."""
        cfg, train_ds, _ = tiny_data
        model = GenLIModel(cfg, 100, 10)
        for p in model.store.params.values():
            p.data[:] = 0.0
        batch = train_ds.batch(np.arange(16))
        batch["label"][:] = 1
        _, parts = model.loss(batch)
        n = cfg.n_buckets
        assert parts["loss_ctr"] == pytest.approx(math.log(2.0), abs=1e-12)
        assert parts["loss_implicit"] == pytest.approx(math.log(n), abs=1e-12)
        assert parts["loss_explicit"] == pytest.approx(math.log(n), abs=1e-12)
        assert parts["loss_total"] == pytest.approx(
            math.log(2.0) + 2 * math.log(n), abs=1e-12)

    def test_frozen_total_at_default_bucket_count(self):
        cfg = tiny_config(n_buckets=4096)
        model = GenLIModel(cfg, 50, 8)
        for p in model.store.params.values():
            p.data[:] = 0.0
        rng = np.random.default_rng(0)
        batch = {
            "items": rng.integers(1, 50, (4, cfg.seq_len)),
            "categories": rng.integers(1, 8, (4, cfg.seq_len)),
            "mask": np.ones((4, cfg.seq_len), bool),
            "lengths": np.full(4, cfg.seq_len),
            "target_item": rng.integers(1, 50, 4),
            "target_category": rng.integers(1, 8, 4),
            "label": np.ones(4, dtype=np.int64),
            "exposed_item": rng.integers(1, 50, 4),
            "user": np.arange(4),
        }
        total, _ = model.loss(batch)
        assert float(total.data) == pytest.approx(17.32867951399863, abs=1e-11)


class TestTrainLoop:
    def test_report_columns_and_rows(self, tiny_data, tmp_path):
        cfg, train_ds, eval_ds = tiny_data
        model = fresh_model(cfg, train_ds, eval_ds)
        report = train(model, train_ds, eval_ds, cfg, out_dir=tmp_path)
        assert len(report.epochs) == cfg.epochs
        csv = (tmp_path / "train_report.csv").read_text()
        header, *rows = csv.strip().split("\n")
        assert header == ",".join(REPORT_COLUMNS)
        assert len(rows) == cfg.epochs
        assert (tmp_path / "checkpoint.bin").exists()

    def test_loss_decreases_on_learnable_data(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        cfg = tiny_config(epochs=4, learning_rate=0.01)
        model = fresh_model(cfg, train_ds, eval_ds)
        report = train(model, train_ds, eval_ds, cfg)
        assert report.epochs[-1].loss_total < report.epochs[0].loss_total

    def test_two_runs_byte_identical(self, tiny_data, tmp_path):
        cfg, train_ds, eval_ds = tiny_data
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            out.mkdir()
            model = fresh_model(cfg, train_ds, eval_ds)
            train(model, train_ds, eval_ds, cfg, out_dir=out)
            outs.append(out)
        a, b = outs
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()
        assert (a / "train_report.csv").read_text() == (b / "train_report.csv").read_text()

    def test_resume_replays_uninterrupted_run(self, tiny_data, tmp_path):
        cfg, train_ds, eval_ds = tiny_data
        straight = tmp_path / "straight"
        straight.mkdir()
        train(fresh_model(cfg, train_ds, eval_ds), train_ds, eval_ds, cfg,
              out_dir=straight)

        half_cfg = tiny_config(epochs=1)
        halfway = tmp_path / "halfway"
        halfway.mkdir()
        train(fresh_model(half_cfg, train_ds, eval_ds), train_ds, eval_ds,
              half_cfg, out_dir=halfway)
        resumed = tmp_path / "resumed"
        resumed.mkdir()
        train(fresh_model(cfg, train_ds, eval_ds), train_ds, eval_ds, cfg,
              out_dir=resumed, resume_from=halfway / "checkpoint.bin")

        assert (straight / "checkpoint.bin").read_bytes() == \
            (resumed / "checkpoint.bin").read_bytes()

    def test_empty_dataset_rejected(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        with pytest.raises(DataError, match="empty"):
            train(fresh_model(cfg, train_ds, eval_ds), Dataset(cfg.seq_len),
                  eval_ds, cfg)

    def test_nan_weight_aborts_with_culprit(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        model = fresh_model(cfg, train_ds, eval_ds)
        model.store.params["ctr/layer0/W"].data[0, 0] = np.nan
        with pytest.raises(NumericalError, match=r"epoch 0.*ctr/layer0/W"):
            train(model, train_ds, eval_ds, cfg)

    def test_early_stop_after_three_stale_epochs(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        stop_cfg = tiny_config(epochs=50, early_stop="true",
                               learning_rate=1e-12)
        model = fresh_model(stop_cfg, train_ds, eval_ds)
        report = train(model, train_ds, eval_ds, stop_cfg)
        assert report.stopped_early
        assert len(report.epochs) < 50


class TestEvaluation:
    def test_predict_dataset_matches_batched_predict(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        model = fresh_model(cfg, train_ds, eval_ds)
        scores = predict_dataset(model, eval_ds, batch_size=7)
        direct = model.predict(eval_ds.batch(np.arange(len(eval_ds))))
        np.testing.assert_allclose(scores, direct, rtol=1e-12)

    def test_evaluate_auc_invariant_to_batch_size(self, tiny_data):
        cfg, train_ds, eval_ds = tiny_data
        model = fresh_model(cfg, train_ds, eval_ds)
        assert evaluate_auc(model, eval_ds, batch_size=5) == \
            evaluate_auc(model, eval_ds, batch_size=1000)


class TestNegativeSampling:
    def _impressions(self, n_users=6, per_user=8, n_items=40, seed=0):
        rng = np.random.default_rng(seed)
        item_category = np.concatenate([[0], rng.integers(1, 5, n_items)])
        ds = Dataset(seq_len=10)
        for user in range(n_users):
            hist = rng.integers(1, n_items + 1, 10)
            seq_index = ds.add_sequence(hist, item_category[hist],
                                        np.arange(10, 0, -1))
            for _ in range(per_user):
                item = int(rng.integers(1, n_items + 1))
                ds.samples.append(Sample(
                    user=user, target_item=item,
                    target_category=int(item_category[item]),
                    label=int(rng.random() < 0.5), exposed_item=item,
                    seq_index=seq_index,
                ))
        ds.finalize()
        return ds, item_category

    def test_one_to_one_ratio_and_inheritance(self):
        ds, item_category = self._impressions()
        out = negative_sample(ds, item_category, np.random.default_rng(1))
        labels = np.array([s.label for s in out.samples])
        assert labels.sum() * 2 == len(labels)
        # alternating positive/negative pairs share user and history
        for pos, neg in zip(out.samples[0::2], out.samples[1::2]):
            assert (pos.label, neg.label) == (1, 0)
            assert pos.user == neg.user
            assert pos.seq_index == neg.seq_index
            assert neg.exposed_item == -1

    def test_negatives_never_clicked_by_user(self):
        ds, item_category = self._impressions(seed=2)
        out = negative_sample(ds, item_category, np.random.default_rng(3))
        clicked = {}
        for s in ds.samples:
            if s.label == 1:
                clicked.setdefault(s.user, set()).add(s.target_item)
        for s in out.samples:
            if s.label == 0:
                assert s.target_item not in clicked[s.user]
                assert s.target_category == item_category[s.target_item]

    def test_deterministic_under_seed(self):
        ds, item_category = self._impressions(seed=4)
        a = negative_sample(ds, item_category, np.random.default_rng(7))
        b = negative_sample(ds, item_category, np.random.default_rng(7))
        assert [(s.user, s.target_item, s.label) for s in a.samples] == \
            [(s.user, s.target_item, s.label) for s in b.samples]

    def test_user_without_positives_rejected(self):
        ds, item_category = self._impressions(seed=5)
        for s in ds.samples:
            if s.user == 2:
                s.label = 0
        with pytest.raises(DataError, match="user 2 has no positive"):
            negative_sample(ds, item_category, np.random.default_rng(0))
