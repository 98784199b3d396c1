"""Gated fusion of per-kind retrieval summaries."""

import numpy as np
import pytest

from genli import nn
from genli.fusion import InterestFusion
from oracles import max_rel_err, numeric_gradient


KINDS = ("implicit", "explicit", "relative")


def make_fusion(seed=0, d=8, heads=2, head_dim=4, kinds=KINDS):
    store = nn.ParameterStore()
    fusion = InterestFusion(store, "fusion", d, heads, head_dim, kinds,
                            np.random.default_rng(seed))
    return store, fusion


class TestAggregate:
    def test_output_shape(self):
        _, fusion = make_fusion()
        rng = np.random.default_rng(1)
        selected = nn.Tensor(rng.standard_normal((3, 5, 8)))
        target = nn.Tensor(rng.standard_normal((3, 1, 8)))
        mask = np.ones((3, 5), bool)
        out = fusion.aggregate("explicit", selected, mask, target)
        assert out.shape == (3, 4)

    def test_padded_selections_ignored(self):
        _, fusion = make_fusion()
        rng = np.random.default_rng(2)
        selected = rng.standard_normal((1, 4, 8))
        target = nn.Tensor(rng.standard_normal((1, 1, 8)))
        mask = np.array([[True, True, False, False]])
        out1 = fusion.aggregate("implicit", nn.Tensor(selected), mask, target).data
        tampered = selected.copy()
        tampered[0, 2:] = 999.0
        out2 = fusion.aggregate("implicit", nn.Tensor(tampered), mask, target).data
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_kinds_have_separate_parameters(self):
        store, _ = make_fusion()
        names = set(store.params)
        for kind in KINDS:
            assert f"fusion/{kind}/Wq" in names


class TestFuse:
    def test_output_shape_and_grad_flow(self):
        store, fusion = make_fusion()
        rng = np.random.default_rng(3)
        parts = [nn.Tensor(rng.standard_normal((2, 4)), requires_grad=True, op=k)
                 for k in KINDS]
        out = fusion.fuse(parts)
        assert out.shape == (2, 4)
        (out * out).sum().backward()
        for part in parts:
            assert part.grad is not None

    def test_closed_gate_silences_output(self):
        store, fusion = make_fusion()
        fusion.gate_out.bias.data[...] = -60.0
        fusion.gate_out.weights.data[...] = 0.0
        rng = np.random.default_rng(4)
        parts = [nn.Tensor(rng.standard_normal((2, 4))) for _ in KINDS]
        out = fusion.fuse(parts)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-20)

    def test_wrong_arity_rejected(self):
        _, fusion = make_fusion()
        with pytest.raises(ValueError):
            fusion.fuse([nn.Tensor(np.zeros((1, 4)))])

    def test_two_kind_configuration(self):
        _, fusion = make_fusion(kinds=("implicit", "explicit"))
        rng = np.random.default_rng(5)
        parts = [nn.Tensor(rng.standard_normal((3, 4))) for _ in range(2)]
        assert fusion.fuse(parts).shape == (3, 4)

    def test_end_to_end_gradcheck(self):
        store, fusion = make_fusion(heads=2, head_dim=3)
        rng = np.random.default_rng(6)
        selected = {k: nn.Tensor(rng.standard_normal((2, 4, 8))) for k in KINDS}
        target = nn.Tensor(rng.standard_normal((2, 1, 8)))
        mask = np.array([[True, True, True, False]] * 2)

        def loss_value():
            parts = [fusion.aggregate(k, selected[k], mask, target) for k in KINDS]
            return (fusion.fuse(parts).sigmoid()).sum()

        loss = loss_value()
        loss.backward()
        for name, param in store.params.items():
            numeric = numeric_gradient(lambda: float(loss_value().data), param.data)
            err = max_rel_err(param.grad, numeric)
            assert err < 1e-4, f"{name}: {err:.2e}"
            param.grad = None
