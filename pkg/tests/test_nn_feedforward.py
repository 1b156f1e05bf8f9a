import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmrctl.errors import NumericError, ParameterError, UsageError
from wmrctl.nn_feedforward import (
    FeatureScales,
    Gradients,
    Mlp,
    build_features,
    feedback_error_learn_step,
    load_weights,
    mlp_backward,
    mlp_forward,
    mlp_init,
    mlp_update,
    save_weights,
)
from wmrctl.vehicle_model import MotorCommand, VelocityState


def loss(net, x, target):
    y, _ = mlp_forward(net, x)
    return 0.5 * float(np.sum((y - target) ** 2))


def with_param(net, k, idx, value):
    arrays = [a.copy() for a in net.params()]
    arrays[k][idx] = value
    return Mlp(*arrays)


def fd_gradients(net, x, target, eps=1e-5):
    grads = []
    for k, arr in enumerate(net.params()):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            w = arr[idx]
            g[idx] = (loss(with_param(net, k, idx, w + eps), x, target) - loss(with_param(net, k, idx, w - eps), x, target)) / (2 * eps)
        grads.append(g)
    return grads


def seeded_net(n_in, n_h, n_out, seed):
    rng = np.random.default_rng(seed)
    net = mlp_init(n_in, n_h, n_out, seed, init_scale=0.8)
    # non-zero biases so their gradients are exercised too
    return Mlp(net.W1, rng.normal(size=n_h) * 0.3, net.W2, rng.normal(size=n_out) * 0.3)


def assert_grad_close(analytic, numeric, rel=1e-6, floor=1e-9):
    for a, n in zip(analytic, numeric):
        bound = np.maximum(rel * np.abs(n), floor)
        assert np.all(np.abs(a - n) <= bound), np.max(np.abs(a - n) - bound)


class TestInit:
    def test_same_seed_same_network(self):
        assert mlp_init(6, 8, 2, seed=3).same_weights(mlp_init(6, 8, 2, seed=3))

    def test_different_seed(self):
        assert not mlp_init(6, 8, 2, seed=3).same_weights(mlp_init(6, 8, 2, seed=4))

    def test_zero_scale(self):
        net = mlp_init(6, 8, 2, seed=1, init_scale=0.0)
        assert not np.any(net.flat())

    def test_range_and_shapes(self):
        net = mlp_init(5, 7, 3, seed=0, init_scale=0.2)
        assert net.sizes == (5, 7, 3)
        assert np.all(np.abs(net.W1) <= 0.2) and np.all(np.abs(net.W2) <= 0.2)
        assert not np.any(net.b1) and not np.any(net.b2)

    @pytest.mark.parametrize("sizes", [(0, 4, 2), (3, 0, 2), (3, 4, 0), (2.5, 4, 2)])
    def test_invalid_sizes(self, sizes):
        with pytest.raises(ParameterError):
            mlp_init(*sizes, seed=0)

    def test_inconsistent_shapes(self):
        with pytest.raises(ParameterError):
            Mlp(np.zeros((3, 2)), np.zeros(4), np.zeros((2, 3)), np.zeros(2))


class TestForward:
    def test_zero_network(self):
        y, _ = mlp_forward(mlp_init(6, 8, 2, 0, 0.0), np.arange(6.0))
        assert y.tolist() == [0.0, 0.0]

    def test_zero_input_zero_biases(self):
        y, _ = mlp_forward(mlp_init(6, 8, 2, 0, 5.0), np.zeros(6))
        assert y.tolist() == [0.0, 0.0]

    def test_single_hidden_unit(self):
        net = Mlp(np.array([[1.0, 0.0, 0.0]]), np.zeros(1), np.array([[1.0]]), np.zeros(1))
        y, _ = mlp_forward(net, np.array([0.5, 0.3, -0.2]))
        assert round(math.tanh(0.5), 5) == 0.46212
        assert y[0] == pytest.approx(math.tanh(0.5), abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            mlp_forward(mlp_init(6, 8, 2, 0), np.zeros(5))


class TestBackward:
    def test_zero_error(self):
        net = seeded_net(3, 4, 2, 0)
        _, cache = mlp_forward(net, np.array([0.1, -0.4, 0.9]))
        g = mlp_backward(net, cache, [0.0, 0.0])
        assert all(not np.any(a) for a in g.arrays())

    @pytest.mark.parametrize("sizes, seed", [((3, 4, 2), 11), ((6, 8, 2), 5)])
    def test_matches_central_differences(self, sizes, seed):
        net = seeded_net(*sizes, seed)
        rng = np.random.default_rng(seed + 100)
        x = rng.normal(size=sizes[0])
        target = rng.normal(size=sizes[2])
        y, cache = mlp_forward(net, x)
        analytic = mlp_backward(net, cache, y - target).arrays()
        assert_grad_close(analytic, fd_gradients(net, x, target))

    @given(scale=st.floats(-5, 5))
    @settings(max_examples=25)
    def test_linear_in_output_error(self, scale):
        net = seeded_net(3, 4, 2, 2)
        _, cache = mlp_forward(net, np.array([0.3, 0.1, -0.7]))
        g1 = mlp_backward(net, cache, [0.4, -1.1]).arrays()
        g2 = mlp_backward(net, cache, [0.4 * scale, -1.1 * scale]).arrays()
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(b, scale * a, rtol=1e-12, atol=1e-15)

    def test_doubling(self):
        net = seeded_net(3, 4, 2, 2)
        _, cache = mlp_forward(net, np.array([0.3, 0.1, -0.7]))
        g1 = mlp_backward(net, cache, [0.4, -1.1]).arrays()
        g2 = mlp_backward(net, cache, [0.8, -2.2]).arrays()
        for a, b in zip(g1, g2):
            np.testing.assert_array_equal(b, 2 * a)

    def test_stale_cache(self):
        net = seeded_net(3, 4, 2, 2)
        _, cache = mlp_forward(net, np.zeros(3))
        other = mlp_update(net, mlp_backward(net, cache, [1.0, 1.0]), 0.1)
        with pytest.raises(UsageError):
            mlp_backward(other, cache, [1.0, 1.0])


class TestUpdate:
    def grads(self, net, x, err):
        _, cache = mlp_forward(net, x)
        return mlp_backward(net, cache, err)

    def test_zero_gradients(self):
        net = seeded_net(6, 8, 2, 0)
        g = Gradients(*(np.zeros_like(a) for a in net.params()))
        assert mlp_update(net, g, 0.1).same_weights(net)

    def test_zero_rate(self):
        net = seeded_net(6, 8, 2, 0)
        assert mlp_update(net, self.grads(net, np.ones(6), [1.0, 2.0]), 0.0).same_weights(net)

    def test_descent(self):
        net = seeded_net(6, 8, 2, 7)
        rng = np.random.default_rng(1)
        x, target = rng.normal(size=6), rng.normal(size=2)
        y, cache = mlp_forward(net, x)
        new = mlp_update(net, mlp_backward(net, cache, y - target), 1e-3)
        assert loss(new, x, target) < loss(net, x, target)

    def test_non_finite_rejected(self):
        net = seeded_net(3, 4, 2, 0)
        g = Gradients(np.full((4, 3), np.nan), np.zeros(4), np.zeros((2, 4)), np.zeros(2))
        before = net.flat().copy()
        with pytest.raises(NumericError):
            mlp_update(net, g, 0.1)
        np.testing.assert_array_equal(net.flat(), before)

    @given(lr=st.floats(1e-4, 1.0), clip=st.floats(1e-3, 10), mag=st.floats(0.1, 1e3))
    @settings(max_examples=40)
    def test_clipped_step_is_bounded(self, lr, clip, mag):
        net = seeded_net(6, 8, 2, 3)
        g = self.grads(net, np.linspace(-1, 1, 6), [mag, -mag])
        new = mlp_update(net, g, lr, clip)
        assert np.linalg.norm(new.flat() - net.flat()) <= lr * clip * (1 + 1e-9)


class TestFeedbackErrorLearning:
    x = np.array([0.5, 0.1, 0.0, 0.0, 0.45, 0.1])

    def test_zero_feedback_no_change(self):
        net = seeded_net(6, 8, 2, 0)
        u_ff, new = feedback_error_learn_step(net, self.x, MotorCommand(0.0, 0.0), 0.01)
        assert new.same_weights(net)
        y, _ = mlp_forward(net, self.x)
        assert (u_ff.u_l, u_ff.u_r) == (y[0], y[1])

    def test_zero_rate_is_inference(self):
        net = seeded_net(6, 8, 2, 0)
        u_ff, new = feedback_error_learn_step(net, self.x, MotorCommand(3.0, -1.0), 0.0)
        assert new.same_weights(net)
        y, _ = mlp_forward(net, self.x)
        assert (u_ff.u_l, u_ff.u_r) == (y[0], y[1])

    def test_output_moves_towards_feedback(self):
        net = seeded_net(6, 8, 2, 0)
        u_fb = MotorCommand(2.0, -1.0)
        u0, new = feedback_error_learn_step(net, self.x, u_fb, 1e-2)
        u1, _ = feedback_error_learn_step(new, self.x, MotorCommand(), 0.0)
        assert u1.u_l > u0.u_l and u1.u_r < u0.u_r

    def test_absorbs_constant_offset(self):
        # Static toy plant y = u - d under proportional feedback u_fb = -k y.
        # As the network learns, u_ff approaches d and the feedback effort vanishes.
        d = np.array([3.0, -2.0])
        k = 4.0
        net = mlp_init(6, 8, 2, seed=0)
        efforts = []
        for _ in range(1000):
            y_ff, _ = mlp_forward(net, self.x)
            u_fb = -k * (y_ff - d) / (1 + k)
            _, net = feedback_error_learn_step(net, self.x, MotorCommand(*u_fb), 2e-3)
            efforts.append(np.linalg.norm(u_fb))
        blocks = np.array(efforts).reshape(10, 100).mean(axis=1)
        assert np.all(np.diff(blocks) < 0)
        assert blocks[-1] < 0.1 * blocks[0]


class TestFeatures:
    def test_layout(self):
        s = FeatureScales.from_limits(1.0, 2.0)
        x = build_features(VelocityState(0.5, 0.4), VelocityState(0.4, 0.2), VelocityState(0.45, 0.3), 0.01, s)
        np.testing.assert_allclose(x, [0.5, 0.2, 1.0, 1.0, 0.45, 0.15], rtol=1e-12)

    def test_scales_positive(self):
        with pytest.raises(ParameterError):
            FeatureScales(v_ref=0.0)


class TestWeightsFile:
    def test_round_trip_exact(self, tmp_path):
        net = seeded_net(6, 8, 2, 9)
        p = tmp_path / "w.txt"
        save_weights(net, p)
        assert load_weights(p).same_weights(net)
        assert p.read_text().startswith("wmrctl-mlp 1\nsizes 6 8 2\n")

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "w.txt"
        p.write_text("something else\n")
        with pytest.raises(ParameterError):
            load_weights(p)

    def test_wrong_count(self, tmp_path):
        p = tmp_path / "w.txt"
        p.write_text("wmrctl-mlp 1\nsizes 1 1 1\nW1 1.0 2.0\nb1 0.0\nW2 1.0\nb2 0.0\n")
        with pytest.raises(ParameterError, match=":3:"):
            load_weights(p)
