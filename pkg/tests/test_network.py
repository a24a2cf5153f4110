import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprobust.errors import FormatError, InvalidInputError
from liprobust.network import (
    Q2_SIGMOID,
    Q2_TANH,
    Activation,
    MlpNetwork,
    NetworkSpec,
    activation_apply,
    activation_derivative,
    batch_jacobians,
    derivative_q,
    derivative_second_moment,
    derivative_variance,
    forward,
    jacobian,
    load_network,
    logits,
    save_network,
    weight_std_multiplier,
    xavier_init,
)
from liprobust.rng import Rng


def central_difference_jacobian(net, x, step=1e-5):
    cols = []
    for e in np.eye(x.size):
        cols.append((logits(net, x + step * e) - logits(net, x - step * e)) / (2 * step))
    return np.stack(cols, axis=1)


def gauss_hermite_moments(kind, order=200):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    d = activation_derivative(kind, x)
    return (w * d).sum(), (w * d * d).sum()


class TestActivations:
    def test_apply(self):
        assert list(activation_apply("relu", [-1.0, 0.0, 2.0])) == [0.0, 0.0, 2.0]
        assert activation_apply("sigmoid", [0.0])[0] == 0.5
        v = np.array([1.5, -2.0])
        assert np.array_equal(activation_apply("identity", v), v)

    def test_derivative(self):
        assert list(activation_derivative("relu", [-1.0, 0.5])) == [0.0, 1.0]
        assert list(activation_derivative("relu", [0.0])) == [0.0]
        assert list(activation_derivative("identity", [7.0])) == [1.0]

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
    def test_smooth_derivatives_match_finite_differences(self, kind):
        x = np.linspace(-4, 4, 41)
        h = 1e-6
        fd = (activation_apply(kind, x + h) - activation_apply(kind, x - h)) / (2 * h)
        assert np.allclose(activation_derivative(kind, x), fd, atol=1e-8)

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            activation_apply("softplus", [1.0])


class TestDerivativeVariance:
    def test_closed_forms(self):
        assert derivative_variance("relu") == 0.25
        assert derivative_variance("identity") == 0.0

    @pytest.mark.parametrize("kind, golden", [("sigmoid", Q2_SIGMOID), ("tanh", Q2_TANH)])
    def test_monte_carlo_reproduces_pinned_constant(self, kind, golden):
        assert derivative_variance(kind, 10**6, Rng(0)) == golden

    @pytest.mark.parametrize("kind, golden", [("sigmoid", Q2_SIGMOID), ("tanh", Q2_TANH)])
    def test_pinned_constant_matches_quadrature(self, kind, golden):
        mean, second = gauss_hermite_moments(kind)
        assert golden == pytest.approx(second - mean**2, rel=5e-3)

    def test_relu_closed_form_matches_quadrature_free_monte_carlo(self):
        z = Rng(1).normal(10**6)
        assert np.var(activation_derivative("relu", z)) == pytest.approx(0.25, abs=2e-3)

    def test_requires_enough_samples(self):
        with pytest.raises(InvalidInputError):
            derivative_variance("tanh", 100)

    def test_second_moment(self):
        assert derivative_second_moment("relu") == 0.5
        _, second = gauss_hermite_moments("tanh")
        assert derivative_second_moment("tanh", rng=Rng(0)) == pytest.approx(second, rel=5e-3)

    def test_q(self):
        assert derivative_q("relu") == 0.5


class TestSpecAndInit:
    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            NetworkSpec(0, 2, 2, 2)
        with pytest.raises(InvalidInputError):
            NetworkSpec(2, 2, 2, 2, alpha=0.0)
        assert NetworkSpec(3, 5, 7, 2).layer_dims == [5, 7, 7, 2]

    def test_biases_zero(self, rng):
        net = xavier_init(NetworkSpec(3, 6, 9, 4), rng)
        assert all(np.all(b == 0) for b in net.biases)

    def test_shapes(self, rng):
        net = xavier_init(NetworkSpec(3, 6, 9, 4), rng)
        assert [w.shape for w in net.weights] == [(9, 6), (9, 9), (4, 9)]

    def test_first_layer_variance(self):
        net = xavier_init(NetworkSpec(2, 100, 100, 100, alpha=1.0), Rng(0))
        assert 0.009 <= np.var(net.weights[0]) <= 0.011

    def test_deterministic(self):
        a = xavier_init(NetworkSpec(2, 5, 5, 3), Rng(4))
        b = xavier_init(NetworkSpec(2, 5, 5, 3), Rng(4))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_bad_layer_shapes_rejected(self):
        spec = NetworkSpec(2, 2, 3, 1)
        with pytest.raises(InvalidInputError):
            MlpNetwork(spec, [np.ones((3, 2)), np.ones((2, 3))])


class TestForward:
    def test_zero_network(self):
        spec = NetworkSpec(3, 4, 5, 3)
        net = MlpNetwork(spec, [np.zeros((5, 4)), np.zeros((5, 5)), np.zeros((3, 5))])
        assert np.all(forward(net, np.ones(4)).logits == 0)

    def test_single_affine_layer(self, rng):
        w, b = rng.normal((3, 4)), rng.normal(3)
        net = MlpNetwork.from_layers([w], [b])
        x = rng.normal(4)
        assert np.array_equal(forward(net, x).logits, w @ x + b)

    def test_hand_case(self, hand_net):
        trace = forward(hand_net, [1.0, -1.0])
        assert trace.logits[0] == 1.0
        assert list(trace.pre_activations[0]) == [1.0, -1.0]
        assert list(trace.activations[0]) == [1.0, 0.0]

    def test_trace_consistency(self, rng):
        net = xavier_init(NetworkSpec(4, 3, 6, 2, "tanh"), rng)
        trace = forward(net, rng.normal(3))
        for z, a in zip(trace.pre_activations[:-1], trace.activations[:-1]):
            assert np.array_equal(a, np.tanh(z))
        assert np.array_equal(trace.pre_activations[-1], trace.activations[-1])

    def test_dimension_mismatch(self, hand_net):
        with pytest.raises(InvalidInputError):
            forward(hand_net, [1.0, 2.0, 3.0])


class TestJacobian:
    def test_single_layer_is_weight(self, rng):
        w = rng.normal((3, 5))
        assert np.array_equal(jacobian(MlpNetwork.from_layers([w]), rng.normal(5)), w)

    def test_hand_case(self, hand_net):
        assert jacobian(hand_net, [1.0, -1.0]).tolist() == [[1.0, 0.0]]

    def test_tanh_matches_finite_differences(self, rng):
        net = xavier_init(NetworkSpec(3, 6, 8, 4, "tanh"), rng)
        x = rng.normal(6)
        assert np.max(np.abs(jacobian(net, x) - central_difference_jacobian(net, x))) <= 1e-5

    @pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
    def test_smooth_nets_100_pairs(self, kind):
        worst = 0.0
        for seed in range(100):
            r = Rng(seed)
            depth = 2 + seed % 3
            net = xavier_init(NetworkSpec(depth, 4, 6, 3, kind, alpha=1.5), r)
            x = r.normal(4)
            worst = max(worst, np.max(np.abs(jacobian(net, x) - central_difference_jacobian(net, x))))
        assert worst <= 1e-5

    def test_relu_affine_along_ray(self, rng):
        net = xavier_init(NetworkSpec(3, 5, 10, 3), rng)
        x, delta = rng.normal(5), rng.normal(5)
        pre = np.concatenate(forward(net, x).pre_activations[:-1])
        # step small enough that no hidden unit changes sign
        rates = np.concatenate([np.abs(z) for z in forward(net, x + delta).pre_activations[:-1]])
        t = 1e-3 * np.min(np.abs(pre)) / (1.0 + np.max(rates))
        slope = (logits(net, x + t * delta) - logits(net, x)) / t
        assert np.allclose(slope, jacobian(net, x) @ delta, atol=1e-10 * (1 + np.abs(slope).max()) / t * 1e-3 + 1e-10)

    @given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_shape(self, depth, n, d, m, seed):
        net = xavier_init(NetworkSpec(depth, n, d, m), Rng(seed))
        assert jacobian(net, Rng(seed + 1).normal(n)).shape == (m, n)

    def test_batch_matches_single(self, rng):
        net = xavier_init(NetworkSpec(3, 5, 7, 2), rng)
        xs = rng.normal((9, 5))
        batch = batch_jacobians(net, xs, chunk=4)
        for x, j in zip(xs, batch):
            assert np.allclose(j, jacobian(net, x), atol=1e-14)

    def test_element_variance_is_twice_the_closed_form(self):
        """Monte Carlo Jacobian entries at init have variance 4d/((d+n)(d+m)) * E[s'^2];
        for relu that is 2x the Var[s']-based value of 0.0025."""
        spec = NetworkSpec(2, 100, 100, 100)
        x = Rng(99).normal(100)
        samples = np.array([jacobian(xavier_init(spec, Rng(s)), x)[3, 7] for s in range(1000)])
        assert np.var(samples) == pytest.approx(0.005, rel=0.15)


class TestWeightStdMultiplier:
    def test_fresh_init(self):
        net = xavier_init(NetworkSpec(3, 100, 100, 100), Rng(0))
        assert 0.95 <= weight_std_multiplier(net) <= 1.05

    def test_scales(self, rng):
        net = xavier_init(NetworkSpec(2, 20, 20, 20), rng)
        scaled = MlpNetwork(net.spec, [2 * w for w in net.weights], net.biases)
        assert weight_std_multiplier(scaled) == pytest.approx(2 * weight_std_multiplier(net), rel=1e-12)

    def test_zero_network(self):
        spec = NetworkSpec(2, 3, 3, 3)
        assert weight_std_multiplier(MlpNetwork(spec, [np.zeros((3, 3))] * 2)) == 0.0

    def test_tiny_layer_rejected(self):
        with pytest.raises(InvalidInputError):
            weight_std_multiplier(MlpNetwork.from_layers([[[1.0]]]))


class TestSerialization:
    @pytest.mark.parametrize("text", [False, True])
    def test_round_trip(self, tmp_path, rng, text):
        net = xavier_init(NetworkSpec(3, 4, 5, 2, "tanh", alpha=1.7), rng)
        net.biases[1][:] = rng.normal(5)
        path = tmp_path / "net.lipn"
        save_network(net, path, text=text)
        back = load_network(path)
        assert back.spec == net.spec
        assert all(np.array_equal(a, b) for a, b in zip(back.weights, net.weights))
        assert all(np.array_equal(a, b) for a, b in zip(back.biases, net.biases))

    def test_binary_layout(self, tmp_path):
        net = MlpNetwork.from_layers([[[1.0, 2.0]], ], [[3.0]], activation="identity")
        path = tmp_path / "n.lipn"
        save_network(net, path)
        raw = path.read_bytes()
        assert raw[:4] == b"LIPN"
        assert np.frombuffer(raw[36:], "<f8").tolist() == [1.0, 2.0, 3.0]

    def test_truncated_rejected(self, tmp_path, rng):
        path = tmp_path / "n.lipn"
        save_network(xavier_init(NetworkSpec(2, 3, 3, 2), rng), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_network(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "n.lipn"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(FormatError) as err:
            load_network(path)
        assert err.value.offset == 0
