"""Unit tests for linearised statistics and the semigroup estimators."""

import math

import numpy as np
import pytest

from ricci_lab.frame_sde.ensemble import ConstantRate, MonteCarloConfig, simulate_ensemble
from ricci_lab.geometry.functions import ConstantFunction, CoordinateFunction, QuadraticFunction, SineFunction
from ricci_lab.geometry.manifolds import Euclidean
from ricci_lab.semigroup.estimators import (
    NestedDepthExceeded,
    WeightSpec,
    estimate_grad_bismut,
    estimate_grad_fd,
    estimate_Ptf,
    estimate_weighted_pairing,
    generator_defect,
    phi,
)
from ricci_lab.semigroup.statistics import (
    McEstimate,
    MeanStatistic,
    TooFewPaths,
    linear_combination,
    require_paths,
    stack,
)


class TestMeanStatistic:
    """Test delta-method arithmetic on sample means."""

    def test_standard_error_of_a_mean(self):
        samples = np.array([1.0, 2.0, 3.0, 4.0])
        stat = MeanStatistic.from_samples(samples)
        assert float(stat.value) == pytest.approx(2.5)
        assert float(stat.se) == pytest.approx(samples.std(ddof=1) / 2.0)

    def test_constant_has_no_error(self):
        stat = MeanStatistic.constant(3.0, 10)
        assert float(stat.se) == 0.0
        assert stat.n == 10

    def test_difference_of_identical_means_is_exact(self):
        """Common random numbers cancel in a difference."""
        rng = np.random.default_rng(0)
        stat = MeanStatistic.from_samples(rng.standard_normal(500))
        diff = stat - stat
        assert float(diff.value) == 0.0
        assert float(diff.se) == 0.0

    def test_product_rule(self):
        a = MeanStatistic.from_samples(np.array([1.0, 3.0]))
        b = MeanStatistic.from_samples(np.array([2.0, 2.0]))
        product = a * b
        assert float(product.value) == pytest.approx(4.0)
        # b has no spread, so the influence is value(b) * psi(a)
        assert np.allclose(product.influence, 2.0 * a.influence)

    def test_nonlinear_maps(self):
        stat = MeanStatistic.from_samples(np.array([1.0, 3.0]))
        assert float(stat.log().value) == pytest.approx(math.log(2.0))
        assert float(stat.power(2.0).value) == pytest.approx(4.0)
        assert float(stat.xlogx().value) == pytest.approx(2.0 * math.log(2.0))
        assert float(stat.exp().value) == pytest.approx(math.exp(2.0))
        assert float((1.0 / stat).value) == pytest.approx(0.5)

    def test_minimum_zero(self):
        positive = MeanStatistic.from_samples(np.array([1.0, 3.0]))
        clamped = positive.minimum_zero()
        assert float(clamped.value) == 0.0
        assert float(clamped.se) == 0.0
        negative = MeanStatistic.from_samples(np.array([-1.0, -3.0]))
        assert float(negative.minimum_zero().se) == pytest.approx(float(negative.se))

    def test_vector_statistics(self):
        samples = np.array([[1.0, 0.0], [3.0, 2.0]])
        stat = MeanStatistic.from_samples(samples)
        assert np.allclose(stat.value, [2.0, 1.0])
        assert float(stat.norm_sq().value) == pytest.approx(5.0)
        assert float(stat.dot(np.array([1.0, 1.0])).value) == pytest.approx(3.0)
        assert float(stat[1].value) == pytest.approx(1.0)

    def test_stack_and_combine(self):
        a = MeanStatistic.from_samples(np.array([1.0, 2.0]))
        b = MeanStatistic.from_samples(np.array([3.0, 5.0]))
        assert np.allclose(stack([a, b]).value, [1.5, 4.0])
        assert float(linear_combination([2.0, -1.0], [a, b]).value) == pytest.approx(-1.0)

    def test_mismatched_path_counts(self):
        a = MeanStatistic.from_samples(np.ones(3))
        b = MeanStatistic.from_samples(np.ones(4))
        with pytest.raises(ValueError):
            a + b

    def test_require_paths(self):
        require_paths(100)
        with pytest.raises(TooFewPaths):
            require_paths(99)

    def test_estimate_to_dict(self):
        estimate = McEstimate(np.array([1.0, 2.0]), np.array([0.1, 0.2]), n_paths=10, checksum="ab")
        data = estimate.to_dict()
        assert data["value"] == [1.0, 2.0]
        assert data["checksum"] == "ab"
        assert data["flagged"] is False


class TestEstimators:
    """Test P_t f, its gradient and the weighted pairings."""

    def test_phi(self):
        assert phi(0.0, 0.5) == pytest.approx(0.5)
        assert phi(1.0, 0.5) == pytest.approx((1.0 - math.exp(-1.0)) / 2.0)
        assert phi(1e-10, 0.5) == pytest.approx(0.5)

    def test_constant_function(self, unit_sphere, north_pole, small_mc):
        estimate = estimate_Ptf(unit_sphere, None, ConstantFunction(unit_sphere, 2.0), north_pole, 0.2, small_mc)
        assert estimate.value == pytest.approx(2.0)
        assert estimate.se == 0.0
        assert estimate.n_paths == 200

    def test_sphere_height(self, unit_sphere, north_pole):
        """The height is a first eigenfunction: P_t z = exp(-2t) z on the unit 2-sphere."""
        mc = MonteCarloConfig(n_paths=4000, step=0.005, seed=3)
        f = CoordinateFunction(unit_sphere, index=2)
        estimate = estimate_Ptf(unit_sphere, None, f, north_pole, 0.3, mc)
        assert abs(estimate.value - math.exp(-0.6)) < 4.0 * estimate.se + 0.01

    def test_sine_on_the_line(self):
        """P_t sin = exp(-t) sin for the Laplacian on R."""
        line = Euclidean(1)
        mc = MonteCarloConfig(n_paths=4000, step=0.01, seed=4)
        x = np.array([0.7])
        estimate = estimate_Ptf(line, None, SineFunction(line), x, 0.5, mc)
        assert abs(estimate.value - math.exp(-0.5) * math.sin(0.7)) < 4.0 * estimate.se + 1e-3

    def test_bismut_on_ou_is_exact(self, plane, ou, small_mc):
        """Q = exp(-t) id and grad f is constant, so every sample is the same."""
        f = CoordinateFunction(plane, 0)
        estimate = estimate_grad_bismut(plane, ou, f, np.array([0.3, -0.1]), 0.4, small_mc)
        assert np.allclose(estimate.value, [math.exp(-0.4), 0.0], rtol=1e-6)
        assert np.allclose(estimate.se, 0.0)

    def test_finite_differences_on_ou(self, plane, ou, small_mc):
        """Euler paths of the OU process are affine in the start point."""
        f = CoordinateFunction(plane, 1)
        estimate = estimate_grad_fd(plane, ou, f, np.zeros(2), 0.2, small_mc)
        h = 0.2 / round(0.2 / small_mc.step)
        expected = (1.0 - h) ** round(0.2 / h)
        assert np.allclose(estimate.value, [0.0, expected], atol=1e-9)
        assert estimate.n_excluded == 0

    def test_fd_and_bismut_agree_on_the_sphere(self, unit_sphere):
        mc = MonteCarloConfig(n_paths=3000, step=0.005, seed=6)
        x = np.array([0.6, 0.0, 0.8])
        f = CoordinateFunction(unit_sphere, index=0)
        bismut = estimate_grad_bismut(unit_sphere, None, f, x, 0.2, mc)
        fd = estimate_grad_fd(unit_sphere, None, f, x, 0.2, mc, delta=0.05)
        tolerance = 4.0 * np.sqrt(np.asarray(bismut.se) ** 2 + np.asarray(fd.se) ** 2) + 0.02
        assert np.all(np.abs(np.asarray(bismut.value) - np.asarray(fd.value)) < tolerance)

    def test_weighted_pairing_with_constant_weight(self, plane, ou, small_mc):
        f = CoordinateFunction(plane, 0)
        weight = WeightSpec("constant", k=1.0, factor=2.0)
        estimate = estimate_weighted_pairing(plane, ou, f, f, np.zeros(2), 0.0, 0.3, weight, small_mc)
        assert estimate.value == pytest.approx(math.exp(-0.6))
        scalar = estimate_weighted_pairing(plane, ou, f, None, np.zeros(2), 0.1, 0.3, weight, small_mc)
        assert scalar.value == pytest.approx(math.exp(-0.4))

    def test_weighted_pairing_with_functional(self, plane, small_mc):
        f = CoordinateFunction(plane, 0)
        weight = WeightSpec("functional", functional=ConstantRate(0.5))
        estimate = estimate_weighted_pairing(plane, None, f, f, np.zeros(2), 0.0, 0.4, weight, small_mc)
        assert estimate.value == pytest.approx(math.exp(-0.2))

    def test_nested_pairing(self, unit_sphere, north_pole, small_mc):
        """With grad g constant in the frame, the nested term is the suffix transport."""
        f = CoordinateFunction(unit_sphere, index=0)
        weight = WeightSpec("constant", k=0.0)
        nested = estimate_weighted_pairing(
            unit_sphere, None, f, f, north_pole, 0.05, 0.1, weight, small_mc, nesting=1
        )
        plain = estimate_weighted_pairing(unit_sphere, None, f, f, north_pole, 0.05, 0.1, weight, small_mc)
        assert np.isfinite(nested.value) and np.isfinite(plain.value)
        with pytest.raises(NestedDepthExceeded):
            estimate_weighted_pairing(unit_sphere, None, f, f, north_pole, 0.05, 0.1, weight, small_mc, nesting=2)

    def test_shared_ensemble(self, plane, small_mc):
        ensemble = simulate_ensemble(plane, None, np.zeros(2), [0.1, 0.2], small_mc)
        f = CoordinateFunction(plane, 0)
        first = estimate_Ptf(plane, None, f, np.zeros(2), 0.1, small_mc, ensemble=ensemble)
        second = estimate_Ptf(plane, None, f, np.zeros(2), 0.1, small_mc, ensemble=ensemble)
        assert first.value == second.value
        assert first.checksum == ensemble.checksum

    def test_too_few_paths(self, plane):
        mc = MonteCarloConfig(n_paths=50, step=0.01)
        with pytest.raises(TooFewPaths):
            estimate_Ptf(plane, None, CoordinateFunction(plane, 0), np.zeros(2), 0.1, mc)

    def test_generator_defect(self, plane, ou):
        """One Euler step reproduces h L f in expectation for a quadratic."""
        mc = MonteCarloConfig(n_paths=20000, seed=2)
        f = QuadraticFunction(plane, np.eye(2), np.array([1.0, 0.0]))
        defects = generator_defect(plane, ou, f, np.array([0.5, 0.0]), [0.01, 0.02], mc)
        for defect in defects:
            assert abs(defect.value) < 4.0 * defect.se + 2e-3

    def test_weight_spec_validation(self):
        with pytest.raises(ValueError):
            WeightSpec("functional")
        with pytest.raises(ValueError):
            WeightSpec("half_difference", lower=ConstantRate(1.0))
        with pytest.raises(ValueError):
            WeightSpec("exotic")
