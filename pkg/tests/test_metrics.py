"""AUC against the exhaustive pairwise oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genli.errors import DataError
from genli.metrics import AucAccumulator, auc
from oracles import pairwise_auc


class TestAuc:
    def test_hand_example(self):
        # positives at ranks 4 and 2 of 4: (3 wins + 1 loss) / 4 pairs
        scores = np.array([0.9, 0.2, 0.6, 0.4])
        labels = np.array([1, 0, 0, 1])
        assert auc(scores, labels) == pytest.approx(0.75)

    def test_perfect_and_inverted(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        assert auc(scores, np.array([0, 0, 1, 1])) == 1.0
        assert auc(scores, np.array([1, 1, 0, 0])) == 0.0

    def test_all_tied_is_half(self):
        scores = np.full(10, 0.5)
        labels = np.array([1, 0] * 5)
        assert auc(scores, labels) == pytest.approx(0.5)

    def test_matches_pairwise_oracle_random(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(2, 120))
            # coarse grid forces plenty of tied scores
            scores = rng.integers(0, 6, n) / 5.0
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auc(scores, labels) == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12)

    @given(st.lists(st.tuples(st.integers(0, 8), st.booleans()),
                    min_size=2, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_matches_pairwise_oracle_property(self, pairs):
        scores = np.array([s for s, _ in pairs], dtype=float)
        labels = np.array([int(l) for _, l in pairs])
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert auc(scores, labels) == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12)

    def test_single_class_raises(self):
        with pytest.raises(DataError):
            auc(np.array([0.1, 0.9]), np.array([1, 1]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            auc(np.array([0.1, 0.9]), np.array([1]))


class TestAccumulator:
    def test_sharded_equals_single_pass(self):
        rng = np.random.default_rng(4)
        scores = rng.random(500)
        labels = rng.integers(0, 2, 500)
        acc = AucAccumulator()
        for lo in range(0, 500, 77):
            acc.add(scores[lo:lo + 77], labels[lo:lo + 77])
        assert acc.count == 500
        assert acc.value() == auc(scores, labels)

    def test_merge(self):
        rng = np.random.default_rng(5)
        scores = rng.random(100)
        labels = (rng.random(100) < 0.4).astype(int)
        a, b = AucAccumulator(), AucAccumulator()
        a.add(scores[:40], labels[:40])
        b.add(scores[40:], labels[40:])
        assert a.merge(b).value() == auc(scores, labels)

    def test_empty_raises(self):
        with pytest.raises(DataError):
            AucAccumulator().value()
