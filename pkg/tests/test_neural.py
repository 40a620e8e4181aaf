import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coreppr.diffusion import PropagationRow
from coreppr.errors import DataFormatError, TrainingError
from coreppr.neural import (
    AdamState,
    Model,
    adam_step,
    batch_logits,
    build_batch,
    init_model,
    load_model,
    loss_and_grads,
    mlp_forward,
    save_model,
)

from helpers import check_gradients, gradient_instance
from oracles import adam_scalar


class TestModel:
    def test_init_gamma_is_half(self):
        m = init_model(4, 3, (8,), 0)
        assert m.g == 0.0
        assert m.gamma == 0.5
        assert m.dims == [4, 8, 3]

    def test_frozen_gamma_is_zero(self):
        m = init_model(4, 3, (8,), 0, freeze_gamma=True)
        assert m.gamma == 0.0
        assert not m.gate_trainable

    @pytest.mark.parametrize("g", [-700.0, -30.0, 0.0, 30.0, 700.0])
    def test_gamma_range(self, g):
        m = init_model(2, 2, (), 0)
        m.g = g
        assert 0.0 <= m.gamma <= 1.0
        assert 0.0 < m.gamma < 1.0 or abs(g) > 30

    def test_init_bounds(self):
        m = init_model(16, 3, (4,), 1)
        assert np.abs(m.weights[0]).max() <= 1 / 4
        assert np.abs(m.weights[1]).max() <= 1 / 2

    def test_shape_chain_checked(self):
        with pytest.raises(ValueError):
            Model([np.zeros((3, 4)), np.zeros((5, 2))], [np.zeros(4), np.zeros(2)])


class TestForward:
    def test_zero_weights_give_bias(self):
        m = init_model(3, 2, (4,), 0)
        for W in m.weights:
            W[:] = 0
        m.biases[-1][:] = [0.7, -0.2]
        H = mlp_forward(m, np.random.default_rng(0).normal(size=(5, 3)))
        assert np.array_equal(H, np.tile([0.7, -0.2], (5, 1)))

    def test_identity_layer(self):
        m = Model([np.eye(3)], [np.zeros(3)])
        X = np.random.default_rng(0).normal(size=(4, 3))
        assert np.array_equal(mlp_forward(m, X), X)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            mlp_forward(init_model(3, 2, (), 0), np.zeros((2, 4)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_finite(self, seed):
        rng = np.random.default_rng(seed)
        m = init_model(5, 3, (6, 4), rng)
        assert np.all(np.isfinite(mlp_forward(m, rng.normal(size=(7, 5)) * 100)))


class TestBatchLogits:
    def test_self_row(self):
        m = init_model(3, 2, (4,), 0)
        X = np.random.default_rng(1).normal(size=(5, 3))
        row = PropagationRow(2, np.array([2]), np.array([1.0]), np.array([1.0]))
        ctx = build_batch([row], X, np.zeros(5, dtype=int))
        assert batch_logits(m, ctx)[0] == pytest.approx(mlp_forward(m, X[2:3])[0], abs=1e-15)

    def test_gate_limit_uses_ppr_only(self):
        m = init_model(3, 2, (4,), 0)
        m.g = -np.inf
        X = np.random.default_rng(1).normal(size=(5, 3))
        row = PropagationRow(0, np.array([0, 3]), np.array([0.6, 0.3]), np.array([0.2, 0.8]))
        ctx = build_batch([row], X, np.zeros(5, dtype=int))
        H = mlp_forward(m, X)
        assert np.array_equal(batch_logits(m, ctx)[0], 0.6 * H[0] + 0.3 * H[3])

    def test_two_entry_row_by_hand(self):
        m = init_model(3, 2, (4,), 0)
        m.g = 0.3
        gamma = 1 / (1 + math.exp(-0.3))
        X = np.random.default_rng(2).normal(size=(5, 3))
        row = PropagationRow(4, np.array([4, 1]), np.array([0.7, 0.2]), np.array([0.25, 0.75]))
        ctx = build_batch([row], X, np.zeros(5, dtype=int))
        H = mlp_forward(m, X)
        w4 = (1 - gamma) * 0.7 + gamma * 0.25
        w1 = (1 - gamma) * 0.2 + gamma * 0.75
        assert batch_logits(m, ctx)[0] == pytest.approx(w4 * H[4] + w1 * H[1], abs=1e-12)


class TestLoss:
    def test_uniform_logits(self):
        c = 4
        m = Model([np.zeros((3, c))], [np.zeros(c)])
        row = PropagationRow(0, np.array([0]), np.array([1.0]), np.array([1.0]))
        ctx = build_batch([row], np.ones((2, 3)), np.array([2, 1]))
        assert loss_and_grads(m, ctx)[0] == pytest.approx(math.log(c), abs=1e-15)

    def test_equal_weights_zero_gate_gradient(self):
        model, ctx = gradient_instance(3)
        ctx.core = ctx.ppr.copy()
        assert loss_and_grads(model, ctx)[2] == 0.0

    def test_non_finite_loss(self):
        m = Model([np.full((2, 2), np.nan)], [np.zeros(2)])
        row = PropagationRow(0, np.array([0]), np.array([1.0]), np.array([1.0]))
        ctx = build_batch([row], np.ones((1, 2)), np.array([0]))
        with pytest.raises(TrainingError):
            loss_and_grads(m, ctx)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_match_finite_differences(self, seed):
        model, ctx = gradient_instance(seed)
        assert check_gradients(model, ctx) <= 1e-4

    def test_two_hidden_layers_with_dropout_off(self):
        rng = np.random.default_rng(7)
        model, ctx = gradient_instance(7)
        deep = init_model(model.dims[0], model.dims[-1], (5, 4), rng)
        deep.g = -0.4
        assert check_gradients(deep, ctx) <= 1e-4

    def test_dropout_gradient_with_fixed_mask(self):
        model, ctx = gradient_instance(11)
        model.dropout = 0.3
        loss_a, grads_a, _ = loss_and_grads(model, ctx, np.random.default_rng(5))
        loss_b, grads_b, _ = loss_and_grads(model, ctx, np.random.default_rng(5))
        assert loss_a == loss_b
        assert all(np.array_equal(a[0], b[0]) for a, b in zip(grads_a, grads_b))


class TestAdam:
    def test_zero_grads_from_fresh_state(self):
        m = init_model(3, 2, (4,), 0)
        before = m.copy()
        state = AdamState.zeros_like(m)
        zeros = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(m.weights, m.biases)]
        adam_step(m, zeros, 0.0, state, 0.01)
        assert all(np.array_equal(a, b) for a, b in zip(m.weights, before.weights))
        assert m.g == before.g

    def test_zero_grads_decay_moments(self):
        m = init_model(3, 2, (), 0)
        state = AdamState.zeros_like(m)
        ones = [(np.ones_like(W), np.ones_like(b)) for W, b in zip(m.weights, m.biases)]
        adam_step(m, ones, 1.0, state, 0.01)
        m1, v1 = state.m[0].copy(), state.v[0].copy()
        zeros = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(m.weights, m.biases)]
        adam_step(m, zeros, 0.0, state, 0.01)
        assert np.allclose(state.m[0], 0.9 * m1, rtol=0, atol=1e-15)
        assert np.allclose(state.v[0], 0.999 * v1, rtol=0, atol=1e-15)

    def test_lr_zero(self):
        m = init_model(3, 2, (4,), 0)
        before = m.copy()
        grads = [(np.ones_like(W), np.ones_like(b)) for W, b in zip(m.weights, m.biases)]
        adam_step(m, grads, 0.5, AdamState.zeros_like(m), 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(m.weights, before.weights))
        assert m.g == before.g

    def test_matches_scalar_oracle(self):
        m = Model([np.array([[0.5]])], [np.array([-0.25])], g=0.1)
        state = AdamState.zeros_like(m)
        p, mm, vv = 0.5, 0.0, 0.0
        pg, mg, vg = 0.1, 0.0, 0.0
        for t, (gw, gg) in enumerate([(0.3, -0.2), (-1.1, 0.05), (0.7, 0.4)], start=1):
            adam_step(m, [(np.array([[gw]]), np.array([0.0]))], gg, state, 0.01)
            p, mm, vv = adam_scalar(p, gw, mm, vv, t, 0.01)
            pg, mg, vg = adam_scalar(pg, gg, mg, vg, t, 0.01)
            assert abs(m.weights[0][0, 0] - p) <= 1e-12
            assert abs(m.g - pg) <= 1e-12

    def test_frozen_gate_not_updated(self):
        m = init_model(2, 2, (), 0, freeze_gamma=True)
        grads = [(np.ones_like(W), np.ones_like(b)) for W, b in zip(m.weights, m.biases)]
        adam_step(m, grads, 3.0, AdamState.zeros_like(m), 0.1)
        assert m.g == -np.inf


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = init_model(6, 3, (5, 4), 2)
        m.g = 0.123
        save_model(m, tmp_path / "m.cppr")
        back = load_model(tmp_path / "m.cppr")
        assert back.dims == m.dims and back.g == m.g
        for a, b in zip(m.weights + m.biases, back.weights + back.biases):
            assert a.tobytes() == b.tobytes()

    def test_layout(self):
        m = Model([np.array([[1.0, 2.0]])], [np.array([3.0, 4.0])], g=-0.5)
        buf = io.BytesIO()
        save_model(m, buf)
        raw = buf.getvalue()
        assert raw[:6] == b"CPPRM1"
        assert np.frombuffer(raw[6:30], "<u8").tolist() == [1, 1, 2]
        assert np.frombuffer(raw[30:], "<f8").tolist() == [1.0, 2.0, 3.0, 4.0, -0.5]

    def test_frozen_gate_survives(self):
        buf = io.BytesIO()
        save_model(init_model(2, 2, (), 0, freeze_gamma=True), buf)
        back = load_model(io.BytesIO(buf.getvalue()))
        assert back.gamma == 0.0 and not back.gate_trainable

    @pytest.mark.parametrize("raw", [b"XXXXXX", b"CPPRM1" + b"\x01" * 3])
    def test_corrupt(self, raw):
        with pytest.raises(DataFormatError):
            load_model(io.BytesIO(raw))
