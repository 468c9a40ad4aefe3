import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pricebench.market import derive_rng
from pricebench.nn import (
    Adam,
    DenseNet,
    EPSILON_GREEDY_DEFAULT,
    ExplorationSchedule,
    GAUSSIAN_NOISE_DEFAULT,
    ReplayBuffer,
    ShapeError,
    TrainingError,
    Transition,
    hard_update,
    load_weights,
    save_weights,
    soft_update,
)


def finite_difference_check(net, x, rng, n_coords=100, h=1e-5):
    """Central-difference oracle over randomly sampled parameter coordinates."""
    upstream = rng.normal(size=net.layer_sizes[-1])
    _, cache = net.forward_cached(x)
    grads, _ = net.backward(cache, upstream)

    def loss():
        return float(np.dot(net.forward(x), upstream))

    params = net.params()
    worst = 0.0
    for _ in range(n_coords):
        p_idx = rng.integers(len(params))
        flat_p = params[p_idx].ravel()
        flat_g = grads[p_idx].ravel()
        i = rng.integers(flat_p.size)
        orig = flat_p[i]
        flat_p[i] = orig + h
        up = loss()
        flat_p[i] = orig - h
        dn = loss()
        flat_p[i] = orig
        fd = (up - dn) / (2 * h)
        worst = max(worst, abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-8))
    return worst


class TestForward:
    def test_zero_weights_bias_output(self):
        rng = derive_rng(0, "net")
        net = DenseNet([3, 2], ["linear"], rng)
        net.weights[0][:] = 0.0
        net.biases[0][:] = [1.5, -2.0]
        assert np.allclose(net.forward(np.ones(3)), [1.5, -2.0])

    def test_identity_layer(self):
        rng = derive_rng(0, "net")
        net = DenseNet([4, 4], ["linear"], rng)
        net.weights[0][:] = np.eye(4)
        net.biases[0][:] = 0.0
        x = rng.normal(size=4)
        assert np.allclose(net.forward(x), x)

    def test_tanh_output_bounded(self):
        rng = derive_rng(1, "net")
        net = DenseNet([4, 8, 2], ["relu", "tanh"], rng)
        for _ in range(20):
            y = net.forward(rng.normal(size=4) * 10)
            assert np.all(np.abs(y) < 1.0)

    def test_dimension_mismatch(self):
        net = DenseNet([3, 2], ["linear"], derive_rng(0, "net"))
        with pytest.raises(ShapeError):
            net.forward(np.ones(5))

    def test_finite_outputs(self):
        rng = derive_rng(2, "net")
        net = DenseNet([6, 32, 16, 3], ["relu", "relu", "linear"], rng)
        y = net.forward(rng.normal(size=(10, 6)) * 100)
        assert np.all(np.isfinite(y))


class TestBackward:
    def test_scalar_linear_hand_gradient(self):
        net = DenseNet([1, 1], ["linear"], derive_rng(0, "net"))
        net.weights[0][:] = 2.0
        net.biases[0][:] = 0.5
        _, cache = net.forward_cached(np.array([3.0]))
        grads, _ = net.backward(cache, np.array([1.0]))
        assert grads[0] == pytest.approx(3.0)  # dw = x
        assert grads[1] == pytest.approx(1.0)  # db = 1

    def test_zero_upstream_zero_grads(self):
        rng = derive_rng(1, "net")
        net = DenseNet([3, 5, 2], ["relu", "linear"], rng)
        _, cache = net.forward_cached(rng.normal(size=3))
        grads, _ = net.backward(cache, np.zeros(2))
        assert all(np.all(g == 0) for g in grads)

    @pytest.mark.parametrize(
        "sizes,acts",
        [
            ([4, 8, 2], ["relu", "tanh"]),
            ([5, 16, 8, 1], ["relu", "relu", "linear"]),
            ([3, 8, 3], ["tanh", "linear"]),
        ],
    )
    def test_matches_finite_differences(self, sizes, acts):
        rng = derive_rng(hash(tuple(sizes)) % 1000, "fd")
        net = DenseNet(sizes, acts, rng)
        worst = finite_difference_check(net, rng.normal(size=sizes[0]), rng)
        assert worst < 1e-4

    def test_input_gradient_matches_fd(self):
        rng = derive_rng(9, "fd-in")
        net = DenseNet([4, 8, 1], ["relu", "linear"], rng)
        x = rng.normal(size=4)
        _, cache = net.forward_cached(x)
        _, input_grad = net.backward(cache, np.array([1.0]))
        h = 1e-6
        for i in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (net.forward(xp)[0] - net.forward(xm)[0]) / (2 * h)
            assert fd == pytest.approx(input_grad[i], rel=1e-4, abs=1e-8)


class TestAdam:
    def test_zero_gradient_no_change(self):
        net = DenseNet([2, 2], ["linear"], derive_rng(0, "adam"))
        params = net.params()
        before = [p.copy() for p in params]
        Adam(params).step(params, [np.zeros_like(p) for p in params], lr=0.1)
        assert all(np.allclose(a, b) for a, b in zip(before, params))

    def test_constant_gradient_step_approaches_lr(self):
        # Adam normalizes: with a constant gradient the step magnitude -> lr
        p = [np.array([0.0])]
        opt = Adam(p)
        g = [np.array([3.7])]
        prev = p[0].copy()
        for _ in range(200):
            prev = p[0].copy()
            opt.step(p, g, lr=0.01)
        assert abs(prev[0] - p[0][0]) == pytest.approx(0.01, rel=1e-3)

    def test_quadratic_bowl_convergence(self):
        p = [np.array([1.0])]
        opt = Adam(p)
        for _ in range(500):
            grad = [2.0 * p[0]]
            opt.step(p, grad, lr=0.01)
        assert abs(p[0][0]) < 0.05

    def test_nan_gradient_raises(self):
        p = [np.array([1.0])]
        with pytest.raises(TrainingError):
            Adam(p).step(p, [np.array([np.nan])], lr=0.01)


class TestReplayBuffer:
    def test_eviction_order(self):
        buf = ReplayBuffer(capacity=5)
        for i in range(8):
            buf.push(i)
        assert buf.snapshot() == [3, 4, 5, 6, 7]

    def test_single_entry_always_sampled(self):
        buf = ReplayBuffer(capacity=4)
        buf.push("only")
        rng = derive_rng(0, "buf")
        assert set(buf.sample(16, rng)) == {"only"}

    def test_uniform_when_decay_one(self):
        buf = ReplayBuffer(capacity=4, recency_decay=1.0)
        for i in range(4):
            buf.push(i)
        rng = derive_rng(1, "buf")
        draws = buf.sample(100_000, rng)
        freqs = np.bincount(draws, minlength=4) / len(draws)
        assert np.all(np.abs(freqs - 0.25) < 0.02)

    def test_recency_bias_matches_analytic_weights(self):
        buf = ReplayBuffer(capacity=3, recency_decay=0.9)
        for i in range(3):
            buf.push(i)  # entry 2 newest (age 0), 0 oldest (age 2)
        rng = derive_rng(2, "buf")
        draws = buf.sample(100_000, rng)
        freqs = np.bincount(draws, minlength=3) / len(draws)
        weights = np.array([0.81, 0.9, 1.0])
        expected = weights / weights.sum()
        assert np.all(np.abs(freqs - expected) < 0.02)

    def test_empty_buffer_unavailable(self):
        with pytest.raises(ValueError):
            ReplayBuffer(capacity=2).sample(1, derive_rng(0, "buf"))


class TestSoftUpdate:
    def _pair(self):
        rng = derive_rng(3, "soft")
        online = DenseNet([2, 3], ["linear"], rng)
        target = DenseNet([2, 3], ["linear"], rng)
        return target, online

    def test_tau_one_copies(self):
        target, online = self._pair()
        soft_update(target, online, 1.0)
        assert all(np.allclose(t, o) for t, o in zip(target.params(), online.params()))

    def test_tau_zero_freezes(self):
        target, online = self._pair()
        before = [p.copy() for p in target.params()]
        soft_update(target, online, 0.0)
        assert all(np.allclose(b, p) for b, p in zip(before, target.params()))

    def test_halfway(self):
        target, online = self._pair()
        target.weights[0][:] = 0.0
        target.biases[0][:] = 0.0
        online.weights[0][:] = 2.0
        online.biases[0][:] = 2.0
        soft_update(target, online, 0.5)
        assert np.allclose(target.weights[0], 1.0)

    def test_contraction_rate(self):
        target, online = self._pair()
        online.weights[0][:] = 1.0
        target.weights[0][:] = 0.0
        gap0 = np.abs(online.weights[0] - target.weights[0]).max()
        for _ in range(1000):
            soft_update(target, online, 0.001)
        gap = np.abs(online.weights[0] - target.weights[0]).max()
        assert gap / gap0 == pytest.approx(0.999**1000, rel=1e-6)

    def test_architecture_mismatch(self):
        rng = derive_rng(4, "soft")
        with pytest.raises(ShapeError):
            soft_update(
                DenseNet([2, 3], ["linear"], rng), DenseNet([2, 4], ["linear"], rng), 0.5
            )

    def test_hard_update(self):
        target, online = self._pair()
        hard_update(target, online)
        assert all(np.allclose(t, o) for t, o in zip(target.params(), online.params()))


class TestSchedules:
    def test_epsilon_greedy_anchors(self):
        s = EPSILON_GREEDY_DEFAULT
        assert s.value(0) == 1.0
        assert s.value(1) == pytest.approx(0.995, abs=1e-12)

    def test_noise_anchors(self):
        s = GAUSSIAN_NOISE_DEFAULT
        assert s.value(1) == pytest.approx(0.2 * 0.9995, abs=1e-12)

    def test_floor_binds(self):
        assert EPSILON_GREEDY_DEFAULT.value(10**6) == 0.05

    @given(st.integers(min_value=0, max_value=5000))
    @settings(max_examples=50)
    def test_monotone_and_floored(self, e):
        s = ExplorationSchedule("epsilon_greedy", 1.0, 0.99, 0.03)
        assert s.value(e + 1) <= s.value(e)
        assert s.value(e) >= 0.03


class TestTransitionAndIO:
    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            Transition(np.zeros(3), 0, 0.0, np.zeros(4), False)

    def test_save_load_round_trip(self, tmp_path):
        rng = derive_rng(5, "io")
        net = DenseNet([3, 5, 2], ["relu", "tanh"], rng)
        path = tmp_path / "weights.json"
        save_weights(net, path)
        loaded = load_weights(path)
        x = rng.normal(size=3)
        assert np.allclose(net.forward(x), loaded.forward(x))
