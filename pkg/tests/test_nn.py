import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import REL_TOL, gradcheck
from sparsevae.errors import DimensionError, UsageError
from sparsevae.nn import autograd as ag
from sparsevae.nn.autograd import Tensor, backward, no_grad
from sparsevae.nn.checkpoint import load_checkpoint, save_checkpoint
from sparsevae.nn.layers import (
    DenseParams,
    LstmParams,
    dense_forward,
    glorot_normal_init,
    lstm_forward,
    lstm_init,
)
from sparsevae.nn.optim import AdamState, adam_step, lr_schedule


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestAutogradOps:
    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_binary_ops_with_broadcasting(self, rng, op):
        a = rng.normal(size=(2, 3, 4))
        b = rng.uniform(0.5, 2.0, size=(4,))
        fn = getattr(ag, op)
        assert gradcheck(lambda x, y: ag.tsum(fn(x, y) * fn(x, y)), [a, b]) < REL_TOL

    @pytest.mark.parametrize("op", ["exp", "tanh", "sigmoid", "square"])
    def test_unary_ops(self, rng, op):
        a = rng.normal(size=(2, 3))
        fn = getattr(ag, op)
        assert gradcheck(lambda x: ag.tsum(fn(x) * 1.7), [a]) < REL_TOL

    def test_log_and_softmax(self, rng):
        a = rng.uniform(0.2, 3.0, size=(3, 4))
        w = rng.normal(size=(3, 4))
        assert gradcheck(lambda x: ag.tsum(ag.log(x) * w), [a]) < REL_TOL
        assert gradcheck(lambda x: ag.tsum(ag.softmax(x) * w), [a]) < REL_TOL

    def test_relu_away_from_kink(self, rng):
        a = rng.normal(size=(3, 4))
        a[np.abs(a) < 0.1] = 0.5
        assert gradcheck(lambda x: ag.tsum(ag.relu(x) * 2.0), [a]) < REL_TOL

    def test_reductions_indexing_and_concat(self, rng):
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(2, 3, 2))
        w = rng.normal(size=(2, 6))

        def build(x, y):
            m = ag.mean(x, axis=1)                 # [2, 4]
            mx = ag.tmax(x, axis=2)                # [2, 3]
            last = x[:, -1, :2]                    # [2, 2]
            c = ag.concat([ag.reshape(y, (2, 6)), m, mx, last], axis=-1)
            return ag.tsum(ag.square(c[:, :6]) * w) + ag.tsum(c[:, 6:])

        assert gradcheck(build, [a, b]) < REL_TOL

    def test_matmul_gradient(self, rng):
        x = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(4, 2))
        assert gradcheck(lambda a, b: ag.tsum(ag.tanh(ag.matmul(a, b))), [x, w]) < REL_TOL

    def test_clip_has_zero_gradient_outside(self):
        x = Tensor(np.array([-5.0, 0.0, 5.0]), requires_grad=True)
        (g,) = backward(ag.tsum(ag.clip(x, -1.0, 1.0) * 3.0), [x])
        np.testing.assert_array_equal(g, [0.0, 3.0, 0.0])

    def test_tmax_splits_ties(self):
        x = Tensor(np.array([[1.0, 3.0, 3.0]]), requires_grad=True)
        (g,) = backward(ag.tsum(ag.tmax(x, axis=1)), [x])
        np.testing.assert_array_equal(g, [[0.0, 0.5, 0.5]])


class TestBackwardContract:
    def test_linear_map_gradient(self, rng):
        x = rng.normal(size=(2, 3, 4))
        w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        (g,) = backward(ag.tsum(ag.matmul(Tensor(x), w)), [w])
        expected = np.repeat(x.reshape(-1, 4).sum(axis=0)[:, None], 5, axis=1)
        np.testing.assert_allclose(g, expected, rtol=1e-12)

    def test_detached_input_gets_no_gradient(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        w = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        backward(ag.tsum(ag.matmul(x, w)))
        assert x.grad is None
        assert w.grad is not None and w.grad.shape == (2, 2)

    def test_backward_without_forward_graph(self):
        with pytest.raises(UsageError):
            backward(Tensor(np.array(1.0)))
        with pytest.raises(UsageError):
            backward(np.float64(1.0))

    def test_non_scalar_loss_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(UsageError):
            backward(w * 2.0)

    def test_gradients_fresh_per_call(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        first = backward(ag.tsum(w * w), [w])[0].copy()
        second = backward(ag.tsum(w * w), [w])[0]
        np.testing.assert_array_equal(first, second)

    def test_no_grad_records_nothing(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            y = ag.tsum(w * 3.0)
        assert not y.requires_grad
        with pytest.raises(UsageError):
            backward(y)

    def test_every_parameter_gets_matching_shape(self, rng):
        p = glorot_normal_init(3, 4, 0)
        x = rng.normal(size=(2, 5, 3))
        grads = backward(ag.tsum(dense_forward(x, p)), p.parameters())
        assert [g.shape for g in grads] == [(3, 4), (4,)]

    def test_matmul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestGlorotInit:
    def test_zero_bias(self):
        p = glorot_normal_init(2, 2, rng_seed=7)
        np.testing.assert_array_equal(p.bias.data, [0.0, 0.0])

    def test_empirical_std(self):
        draws = np.concatenate([glorot_normal_init(8, 8, rng_seed=s).weights.data.ravel()
                                for s in range(1563)])
        assert draws.size >= 10**5
        assert abs(draws.std() / np.sqrt(2 / 16) - 1) < 0.02

    def test_deterministic(self):
        a = glorot_normal_init(5, 3, rng_seed=11).weights.data
        b = glorot_normal_init(5, 3, rng_seed=11).weights.data
        assert a.tobytes() == b.tobytes()

    def test_invalid_dims(self):
        with pytest.raises(DimensionError):
            glorot_normal_init(0, 3)


def _dense(w, b, act):
    return DenseParams(Tensor(np.asarray(w, float)), Tensor(np.asarray(b, float)), act)


class TestDense:
    def test_identity_linear(self, rng):
        x = rng.normal(size=(2, 3, 2))
        out = dense_forward(x, _dense(np.eye(2), [0, 0], "linear"))
        np.testing.assert_array_equal(out.data, x)

    def test_relu_clamps(self):
        x = np.array([[[-1.0, 2.0]]])
        np.testing.assert_array_equal(dense_forward(x, _dense(np.eye(2), [0, 0], "relu")).data,
                                      [[[0.0, 2.0]]])

    def test_softmax_symmetric(self):
        out = dense_forward(np.array([[[1.0, 1.0]]]), _dense(np.eye(2), [0, 0], "softmax"))
        np.testing.assert_allclose(out.data, [[[0.5, 0.5]]])

    def test_time_distributed(self, rng):
        p = glorot_normal_init(3, 2, 1, "tanh")
        x = rng.normal(size=(2, 4, 3))
        full = dense_forward(x, p).data
        for t in range(4):
            np.testing.assert_allclose(full[:, t], dense_forward(x[:, t], p).data, rtol=0, atol=0)

    def test_shape_error_names_layer(self):
        p = glorot_normal_init(3, 2, 0, name="enc.dense0")
        with pytest.raises(DimensionError, match="enc.dense0"):
            dense_forward(np.ones((1, 2, 4)), p)

    @pytest.mark.parametrize("act", ["linear", "relu", "sigmoid", "tanh", "softmax"])
    def test_gradients(self, rng, act):
        x = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=(3,))
        target = rng.normal(size=(2, 3, 3))

        def build(x_, w_, b_):
            out = dense_forward(x_, DenseParams(w_, b_, act))
            return ag.tsum(ag.square(out - target))

        assert gradcheck(build, [x, w, b]) < REL_TOL


def _lstm_step_by_hand(x, h, c, wx, wh, b):
    z = x @ wx + h @ wh + b
    H = h.shape[-1]
    i, f, g, o = (z[..., k * H:(k + 1) * H] for k in range(4))
    c = _sigmoid(f) * c + _sigmoid(i) * np.tanh(g)
    h = _sigmoid(o) * np.tanh(c)
    return h, c


class TestLstm:
    def test_zero_params_zero_output(self, rng):
        p = LstmParams(Tensor(np.zeros((3, 8))), Tensor(np.zeros((2, 8))), Tensor(np.zeros(8)))
        h, (hT, cT) = lstm_forward(rng.normal(size=(2, 5, 3)), p)
        assert not h.data.any() and not hT.any() and not cT.any()

    def test_single_step_hand_gates(self):
        # hidden size 1, gates i, f, g, o
        wx = np.array([[0.5, -0.3, 0.8, 0.1]])
        wh = np.array([[0.2, 0.4, -0.6, 0.3]])
        b = np.array([0.1, 0.2, -0.1, 0.05])
        p = LstmParams(Tensor(wx), Tensor(wh), Tensor(b))
        x, h0, c0 = 1.5, 0.4, -0.2
        i = _sigmoid(0.5 * x + 0.2 * h0 + 0.1)
        f = _sigmoid(-0.3 * x + 0.4 * h0 + 0.2)
        g = np.tanh(0.8 * x - 0.6 * h0 - 0.1)
        o = _sigmoid(0.1 * x + 0.3 * h0 + 0.05)
        c1 = f * c0 + i * g
        h1 = o * np.tanh(c1)
        out, (h, c) = lstm_forward(np.array([[[x]]]), p, initial_state=(np.array([[h0]]), np.array([[c0]])))
        assert out.data[0, 0, 0] == pytest.approx(h1, abs=1e-15)
        assert c[0, 0] == pytest.approx(c1, abs=1e-15)

    def test_chained_steps_equal_sequence(self, rng):
        p = lstm_init(3, 4, rng_seed=5)
        x = rng.normal(size=(2, 3, 3))
        full, (hT, cT) = lstm_forward(x, p)
        state = None
        for t in range(3):
            out, state = lstm_forward(x[:, t:t + 1], p, initial_state=state)
            np.testing.assert_allclose(out.data[:, 0], full.data[:, t], rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(state[0], hT, rtol=1e-13)
        np.testing.assert_allclose(state[1], cT, rtol=1e-13)

    def test_matches_reference_recurrence(self, rng):
        p = lstm_init(3, 2, rng_seed=9)
        p.bias.data = rng.normal(size=8)
        x = rng.normal(size=(2, 4, 3))
        h = np.zeros((2, 2))
        c = np.zeros((2, 2))
        out = lstm_forward(x, p)[0].data
        for t in range(4):
            h, c = _lstm_step_by_hand(x[:, t], h, c, p.input_weights.data,
                                      p.recurrent_weights.data, p.bias.data)
            np.testing.assert_allclose(out[:, t], h, rtol=1e-12)

    def test_shape_error(self):
        with pytest.raises(DimensionError):
            lstm_forward(np.ones((1, 2, 5)), lstm_init(3, 2))

    def test_gradients(self, rng):
        x = rng.normal(size=(2, 3, 4))
        wx = rng.normal(scale=0.5, size=(4, 12))
        wh = rng.normal(scale=0.5, size=(3, 12))
        b = rng.normal(scale=0.5, size=(12,))
        target = rng.normal(size=(2, 3, 3))

        def build(x_, wx_, wh_, b_):
            h, _ = lstm_forward(x_, LstmParams(wx_, wh_, b_))
            return ag.tsum(ag.square(h - target))

        assert gradcheck(build, [x, wx, wh, b]) < REL_TOL

    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 4), st.integers(1, 3),
           st.integers(0, 10**6))
    def test_gradients_random_shapes(self, b, t, f, h, seed):
        r = np.random.default_rng(seed)
        arrays = [r.normal(size=(b, t, f)), r.normal(scale=0.5, size=(f, 4 * h)),
                  r.normal(scale=0.5, size=(h, 4 * h)), r.normal(scale=0.5, size=(4 * h,))]

        def build(x_, wx_, wh_, b_):
            out, _ = lstm_forward(x_, LstmParams(wx_, wh_, b_))
            return ag.tsum(ag.square(out) + out)

        assert gradcheck(build, arrays) < REL_TOL


class TestAdam:
    def test_first_step_closed_form(self):
        w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        g = np.array([0.3, -0.7, 2.0])
        adam_step([w], [g], AdamState(lr=1e-3, l2_lambda=0.0))
        expected = np.array([1.0, -2.0, 3.0]) - 1e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(w.data, expected, rtol=1e-12)

    def test_zero_gradient_no_change(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        adam_step([w], [np.zeros(2)], AdamState(l2_lambda=0.0))
        np.testing.assert_array_equal(w.data, [1.0, 2.0])

    def test_l2_effective_gradient(self):
        w = Tensor(np.array([1.0]), requires_grad=True)
        state = AdamState(lr=1e-3, l2_lambda=1e-3)
        adam_step([w], [np.zeros(1)], state)
        # effective gradient 1e-3 -> m1 = 1e-4, v1 = 1e-9
        assert state.m[0][0] == pytest.approx(0.1 * 1e-3, rel=1e-12)
        assert state.v[0][0] == pytest.approx(0.001 * 1e-6, rel=1e-12)
        assert state.step == 1

    def test_shape_mismatch(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(DimensionError):
            adam_step([w], [np.ones(2)], AdamState())

    def test_multi_step_matches_reference(self, rng):
        w0 = rng.normal(size=4)
        w = Tensor(w0.copy(), requires_grad=True)
        state = AdamState(lr=0.01, l2_lambda=1e-3)
        m = v = np.zeros(4)
        ref = w0.copy()
        for t in range(1, 6):
            g = rng.normal(size=4)
            adam_step([w], [g], state)
            ge = g + 1e-3 * ref
            m = 0.9 * m + 0.1 * ge
            v = 0.999 * v + 0.001 * ge ** 2
            ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(w.data, ref, rtol=1e-12)


class TestLrSchedule:
    def test_decreasing_history_keeps_lr(self):
        state = AdamState(lr=1e-3)
        lr_schedule(state, list(np.linspace(1.0, 0.1, 40)))
        assert state.lr == 1e-3

    def test_flat_history_halves_twice_at_most(self):
        state = AdamState(lr=1e-3)
        lr_schedule(state, [1.0] * 30)
        # epochs 11 and 21 trigger; the halvings stay above the floor
        assert state.lr == pytest.approx(2.5e-4)
        assert state.lr >= 1e-4

    def test_floor(self):
        state = AdamState(lr=1e-3)
        lr_schedule(state, [1.0] * 200)
        assert state.lr == 1e-4
        state = AdamState(lr=1e-4)
        lr_schedule(state, [1.0] * 30)
        assert state.lr == 1e-4

    def test_empty_history(self):
        with pytest.raises(ValueError):
            lr_schedule(AdamState(), [])


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=5)}
        save_checkpoint(tmp_path / "ck.json", params, {"variant": "sl"})
        loaded, meta = load_checkpoint(tmp_path / "ck.json")
        assert meta["variant"] == "sl"
        for k in params:
            assert loaded[k].tobytes() == params[k].tobytes()

    def test_version_recorded(self, tmp_path):
        save_checkpoint(tmp_path / "ck.json", {"w": np.ones(2)})
        doc = json.loads((tmp_path / "ck.json").read_text())
        assert "version" in json.dumps(doc)
