import math

import numpy as np
import pytest

from liprobust.errors import InvalidInputError
from liprobust.linalg import svd_oracle
from liprobust.lipschitz import (
    LipschitzEstimate,
    all_estimates,
    analytical_lipschitz,
    empirical_lipschitz,
    jacobian_variance,
    pattern_exact_relu,
    posttrain_analytical_lipschitz,
    rmt_max_singular,
    spectral_product_bound,
)
from liprobust.network import MlpNetwork, NetworkSpec, xavier_init
from liprobust.rng import Rng


def hand_formula(n, d, m, depth, alpha, q):
    # written out independently of the library
    front = 2 * d**0.5 / ((d + n) * (d + m)) ** 0.5
    return front * alpha**depth * q ** (depth - 1) * (n**0.5 + m**0.5)


class TestEstimate:
    def test_unknown_method(self):
        with pytest.raises(InvalidInputError):
            LipschitzEstimate(1.0, "magic")

    def test_negative_rejected(self):
        with pytest.raises(InvalidInputError):
            LipschitzEstimate(-1.0, "empirical")

    def test_nonfinite_allowed_with_warning(self):
        assert math.isnan(LipschitzEstimate(math.nan, "empirical", {"warning": "x"}).value)

    def test_upper_bound_flags(self):
        assert LipschitzEstimate(1.0, "spectral_product").is_upper_bound
        assert not LipschitzEstimate(1.0, "empirical").is_upper_bound


class TestAnalytical:
    def test_mnist_sized_value(self):
        est = analytical_lipschitz(NetworkSpec(2, 784, 256, 10))
        assert est.value == pytest.approx(0.948, abs=5e-4)
        assert est.value == pytest.approx(hand_formula(784, 256, 10, 2, 1.0, 0.5), rel=1e-14)

    def test_alpha_zero(self):
        assert analytical_lipschitz(NetworkSpec(3, 5, 5, 5), alpha=0.0).value == 0.0

    def test_depth_invariant_when_alpha_q_is_one(self):
        values = [analytical_lipschitz(NetworkSpec(M, 64, 128, 10, alpha=2.0)).value for M in range(2, 7)]
        assert np.allclose(values, values[0], rtol=1e-12)

    def test_monotone_in_alpha(self):
        spec = NetworkSpec(3, 64, 128, 10)
        vals = [analytical_lipschitz(spec, alpha=a).value for a in np.linspace(0.1, 4, 40)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0])
    def test_monotone_in_depth_when_alpha_q_exceeds_one(self, alpha):
        vals = [analytical_lipschitz(NetworkSpec(M, 64, 128, 10), alpha=alpha).value for M in range(2, 9)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("n, m", [(64, 10), (784, 10), (10, 10)])
    def test_monotone_decreasing_in_width(self, n, m):
        # d / ((d + n)(d + m)) peaks at d = sqrt(n m); beyond that widening lowers the estimate
        widths = [d for d in (16, 32, 64, 128, 256, 512, 1024) if d >= math.sqrt(n * m)]
        vals = [analytical_lipschitz(NetworkSpec(3, n, d, m)).value for d in widths]
        assert len(vals) >= 4
        assert np.all(np.diff(vals) < 0)

    def test_rises_below_geometric_mean_width(self):
        vals = [analytical_lipschitz(NetworkSpec(3, 784, d, 10)).value for d in (4, 16, 64)]
        assert np.all(np.diff(vals) > 0)

    def test_depth_one_rejected(self):
        with pytest.raises(InvalidInputError):
            analytical_lipschitz(NetworkSpec(1, 4, 4, 4))

    def test_identity_degenerates_to_zero(self):
        assert analytical_lipschitz(NetworkSpec(3, 4, 4, 4, "identity")).value == 0.0

    def test_posttrain_uses_measured_alpha(self):
        spec = NetworkSpec(3, 50, 50, 10)
        net = xavier_init(spec, Rng(3))
        doubled = MlpNetwork(spec, [2 * w for w in net.weights], net.biases)
        a = posttrain_analytical_lipschitz(net)
        b = posttrain_analytical_lipschitz(doubled)
        assert b.value == pytest.approx(8 * a.value, rel=1e-10)
        assert b.detail["alpha_tilde"] == pytest.approx(2 * a.detail["alpha_tilde"])


class TestRmt:
    def test_square(self):
        assert rmt_max_singular(400, 400) == pytest.approx(40.0)

    def test_rectangular(self):
        assert rmt_max_singular(1600, 400) == 60.0

    def test_alpha(self):
        assert rmt_max_singular(1600, 400, 0.5) == 30.0

    def test_aspect_rejected(self):
        with pytest.raises(InvalidInputError):
            rmt_max_singular(10, 20)

    def test_monte_carlo_within_three_percent(self):
        a = Rng(5).normal((600, 400))
        s = float(np.linalg.svd(a, compute_uv=False)[0])
        assert s == pytest.approx(rmt_max_singular(600, 400), rel=0.03)


class TestJacobianVariance:
    def test_relu_value(self):
        assert jacobian_variance(NetworkSpec(2, 100, 100, 100)) == pytest.approx(0.0025)

    def test_alpha_zero(self):
        assert jacobian_variance(NetworkSpec(2, 10, 10, 10), alpha=0) == 0.0

    def test_depth_two_specialisation(self):
        n, d, m, a, q = 30, 40, 5, 1.3, 0.4
        expect = 4 * d / ((d + n) * (d + m)) * a**4 * q**2
        assert jacobian_variance(NetworkSpec(2, n, d, m), a, q) == pytest.approx(expect, rel=1e-14)


class TestEmpirical:
    def test_single_layer_is_weight_norm(self, rng):
        w = rng.normal((4, 6))
        net = MlpNetwork.from_layers([w], activation="identity")
        for samples in (1, 50):
            est = empirical_lipschitz(net, samples, rng=Rng(samples))
            assert est.value == pytest.approx(np.linalg.norm(w, 2), rel=1e-8)

    def test_zero_network(self):
        spec = NetworkSpec(2, 3, 4, 2)
        net = MlpNetwork(spec, [np.zeros((4, 3)), np.zeros((2, 4))])
        assert empirical_lipschitz(net, 10).value == 0.0

    def test_sources(self, rng):
        net = xavier_init(NetworkSpec(2, 3, 4, 2), rng)
        data = rng.normal((7, 3))
        assert empirical_lipschitz(net, 5).detail["samples"] == 5
        assert empirical_lipschitz(net, 5, data).detail["samples"] == 12
        assert empirical_lipschitz(net, 5, data, source="dataset").detail["samples"] == 7
        with pytest.raises(InvalidInputError):
            empirical_lipschitz(net, 5, source="dataset")
        with pytest.raises(InvalidInputError):
            empirical_lipschitz(net, 0)

    def test_nonconvergence_flagged(self, rng):
        net = xavier_init(NetworkSpec(2, 30, 30, 30), rng)
        est = empirical_lipschitz(net, 3, max_iter=1, rel_tol=1e-15)
        assert "warning" in est.detail


class TestSpectralProduct:
    def test_single_layer(self, rng):
        w = rng.normal((5, 3))
        net = MlpNetwork.from_layers([w])
        assert spectral_product_bound(net).value == pytest.approx(max(svd_oracle(w)), rel=1e-8)

    def test_scaled_identities(self):
        net = MlpNetwork.from_layers([2 * np.eye(3), 3 * np.eye(3)])
        assert spectral_product_bound(net).value == pytest.approx(6.0, rel=1e-12)

    def test_dominates_empirical(self):
        for seed in range(100):
            r = Rng(seed)
            net = xavier_init(NetworkSpec(1 + seed % 4, 5, 7, 3, ["relu", "tanh", "sigmoid"][seed % 3]), r)
            assert empirical_lipschitz(net, 20, rng=r).value <= spectral_product_bound(net, rng=r).value * (1 + 1e-6)


class TestPatternExact:
    def test_hand_case(self, hand_net):
        est = pattern_exact_relu(hand_net)
        assert est.value == pytest.approx(math.sqrt(2), rel=1e-12)
        assert est.detail["patterns"] == 4

    def test_zero_network(self):
        spec = NetworkSpec(2, 2, 3, 1)
        assert pattern_exact_relu(MlpNetwork(spec, [np.zeros((3, 2)), np.zeros((1, 3))])).value == 0.0

    def test_brute_force_small(self, rng):
        net = xavier_init(NetworkSpec(3, 2, 3, 2), rng)
        best = 0.0
        for code in range(64):
            bits = [(code >> k) & 1 for k in range(6)]
            d1, d2 = np.diag(bits[:3]), np.diag(bits[3:])
            prod = net.weights[2] @ d2 @ net.weights[1] @ d1 @ net.weights[0]
            best = max(best, max(svd_oracle(prod)))
        assert pattern_exact_relu(net).value == pytest.approx(best, rel=1e-9)

    def test_sandwich_six_wide(self):
        net = xavier_init(NetworkSpec(2, 2, 6, 1), Rng(8))
        emp = empirical_lipschitz(net, 10**5, rng=Rng(9)).value
        exact = pattern_exact_relu(net).value
        upper = spectral_product_bound(net).value
        assert emp <= exact * (1 + 1e-6)
        assert exact <= upper * (1 + 1e-6)

    def test_limits(self):
        with pytest.raises(InvalidInputError):
            pattern_exact_relu(xavier_init(NetworkSpec(2, 2, 21, 1), Rng(0)))
        with pytest.raises(InvalidInputError):
            pattern_exact_relu(xavier_init(NetworkSpec(2, 2, 3, 1, "tanh"), Rng(0)))


def test_all_estimates_methods(rng):
    net = xavier_init(NetworkSpec(2, 2, 4, 2), rng)
    methods = [e.method for e in all_estimates(net, 10, rng=rng)]
    assert methods == ["analytical", "analytical", "empirical", "spectral_product", "pattern_exact"]


@pytest.mark.slow
def test_second_moment_q_tracks_init_sweep():
    """Diagnostic: with q^2 = E[s'^2] instead of Var[s'] the closed form follows
    the measured init-time Jacobian norms across depth, width and alpha."""
    from liprobust.experiments import SweepConfig, read_csv, run_init_sweep
    from liprobust.network import derivative_second_moment

    config = SweepConfig(depths=[2, 3, 4, 5], widths=[64, 128, 256, 512], alphas=[1.0, 2.0], trials=10,
                         input_dim=64, output_dim=10, empirical_samples=1, seed=0, workers=4)
    rows = read_csv(run_init_sweep(config))
    q = math.sqrt(derivative_second_moment("relu"))
    ana = np.array([analytical_lipschitz(NetworkSpec(int(r["depth"]), 64, int(r["width"]), 10,
                                                     alpha=float(r["alpha"])), q=q).value for r in rows])
    emp = np.array([float(r["L_empirical_median"]) for r in rows])
    assert np.max(np.abs(ana - emp) / emp) <= 0.30
    assert np.corrcoef(np.log(ana), np.log(emp))[0, 1] >= 0.95
    for d in config.widths:
        for a in config.alphas:
            pts = np.array([(float(r["depth"]), float(r["L_empirical_median"])) for r in rows
                            if int(r["width"]) == d and float(r["alpha"]) == a]).T
            assert abs(np.polyfit(pts[0], np.log(pts[1]), 1)[0] - math.log(a * q)) <= 0.1
