"""Unit tests for the frame-bundle simulator, ensembles and damped transport."""

import math

import numpy as np
import pytest
from scipy import stats

from ricci_lab.frame_sde.dump import MAGIC, DumpFormatError, read_path_dump, write_path_dump
from ricci_lab.frame_sde.ensemble import ConstantRate, MonteCarloConfig, aligned_grid, simulate_ensemble
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.frame_sde.paths import (
    DivergedPath,
    StepTooLarge,
    check_step,
    effective_step,
    first_exit_time,
    simulate_path,
    simulate_reflected_path,
)
from ricci_lab.frame_sde.rng import brownian_increments, path_generator
from ricci_lab.frame_sde.transport import CurvatureOracle, IntervalOutsideGrid, evolve_Q, grid_index
from ricci_lab.geometry.drift import GradPotential, LinearOU
from ricci_lab.geometry.manifolds import EuclideanBall, HalfSpace, Sphere
from ricci_lab.inequalities.bounds import accumulate_weight


class TestRandomStreams:
    """Test per-path counter-based streams."""

    def test_streams_are_keyed_by_path(self):
        a = path_generator(5, 3).standard_normal(4)
        b = path_generator(5, 3).standard_normal(4)
        c = path_generator(5, 4).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_increments_do_not_depend_on_grouping(self):
        together = brownian_increments(1, np.arange(6), 10, 2, 0.01)
        split = np.concatenate(
            [brownian_increments(1, np.arange(3), 10, 2, 0.01), brownian_increments(1, np.arange(3, 6), 10, 2, 0.01)]
        )
        assert np.array_equal(together, split)
        assert together.shape == (6, 10, 2)

    def test_increments_are_gaussian(self):
        """Pooled increments pass a KS test against N(0, step)."""
        increments = brownian_increments(9, np.arange(200), 50, 2, 0.04).ravel()
        assert stats.kstest(increments / 0.2, "norm").pvalue > 1e-3
        assert abs(increments.mean()) < 4.0 * 0.2 / np.sqrt(increments.size)


class TestPaths:
    """Test single-path simulation."""

    def test_effective_step(self):
        assert effective_step(1.0, 0.3) == (0.25, 4)
        assert effective_step(0.5, 0.1)[1] == 5
        with pytest.raises(ValueError):
            effective_step(1.0, 0.0)

    def test_step_too_large(self):
        with pytest.raises(StepTooLarge):
            check_step(EuclideanBall(2, radius=0.1), 0.01)
        check_step(Sphere(2), 1e-3)

    def test_path_stays_on_the_sphere(self, unit_sphere, north_pole):
        path = simulate_path(unit_sphere, None, north_pole, 0.5, 0.01, seed=2, path_index=0)
        assert path.n_steps == 50
        assert np.allclose(np.linalg.norm(path.points, axis=-1), 1.0)
        # frames stay orthonormal and tangent
        gram = np.einsum("kni,knj->kij", path.frames, path.frames)
        assert np.allclose(gram, np.eye(2), atol=1e-10)
        assert np.allclose(np.einsum("kn,knd->kd", path.points, path.frames), 0.0, atol=1e-10)

    def test_path_is_reproducible(self, plane, ou):
        first = simulate_path(plane, ou, np.zeros(2), 0.2, 0.01, seed=9, path_index=4)
        second = simulate_path(plane, ou, np.zeros(2), 0.2, 0.01, seed=9, path_index=4)
        assert np.array_equal(first.points, second.points)

    def test_euler_maruyama_on_the_plane(self, plane, ou):
        """Flat paths follow x + sqrt(2) dB - x h exactly."""
        path = simulate_path(plane, ou, np.array([1.0, 0.0]), 0.05, 0.01, seed=1, path_index=0)
        x = np.array([1.0, 0.0])
        for k in range(path.n_steps):
            x = x + math.sqrt(2.0) * path.increments[k] - path.step * x
        assert np.allclose(path.points[-1], x)

    def test_guard_radius(self, plane):
        with pytest.raises(DivergedPath):
            simulate_path(plane, None, np.zeros(2), 1.0, 0.01, seed=0, path_index=0, guard_radius=1e-3)

    def test_reflected_path_stays_inside(self):
        ball = EuclideanBall(2)
        paths = [
            simulate_reflected_path(ball, None, np.array([0.0, 1.0]), 0.2, 1e-3, seed=4, path_index=i)
            for i in range(5)
        ]
        for path in paths:
            assert np.all(np.linalg.norm(path.points, axis=-1) <= 1.0 + 1e-12)
            assert np.all(path.local_time_increments >= 0)
            assert np.all(np.diff(path.local_time) >= 0)
        assert any(path.local_time[-1] > 0 for path in paths)

    def test_reflection_needs_a_boundary(self, plane):
        with pytest.raises(ValueError):
            simulate_reflected_path(plane, None, np.zeros(2), 0.1, 0.01, seed=0, path_index=0)

    def test_first_exit_time(self, plane):
        path = simulate_path(plane, None, np.zeros(2), 1.0, 0.01, seed=3, path_index=0)
        sigma = first_exit_time(path, 0.2)
        k = int(np.argmax(path.distances >= 0.2))
        assert sigma == pytest.approx(path.times[k])
        assert np.all(path.distances[:k] < 0.2)
        assert first_exit_time(path, 1e6) == math.inf

    def test_metric_horizon(self, unit_sphere, north_pole):
        metric = EvolvingMetric(unit_sphere, 1.0, -2.0)
        assert metric.horizon == pytest.approx(0.5)
        with pytest.raises(ValueError):
            simulate_path(unit_sphere, None, north_pole, 0.5, 0.01, seed=0, path_index=0, metric=metric)


class TestEvolvingMetric:
    """Test the affine scale family."""

    def test_ricci_flow_of_the_sphere(self, unit_sphere):
        metric = EvolvingMetric.ricci_flow(unit_sphere)
        assert metric.rate == pytest.approx(2.0)
        assert metric.horizon == math.inf
        assert np.allclose(metric.curvature_rate(np.array([0.0, 0.25, 3.0])), 0.0)

    def test_ricci_flow_of_the_hyperbolic_plane(self, hyperbolic_plane):
        metric = EvolvingMetric.ricci_flow(hyperbolic_plane)
        assert metric.rate == pytest.approx(-2.0)
        assert metric.horizon == pytest.approx(0.5)
        assert np.allclose(metric.curvature_rate(np.array([0.0, 0.25, 0.49])), 0.0)

    def test_shrinking_sphere_is_not_a_flow(self, unit_sphere):
        metric = EvolvingMetric(unit_sphere, 1.0, -2.0)
        # Ric_t - d_t g / 2 = (kappa + 1) / c(t)
        assert float(metric.curvature_rate(0.25)) == pytest.approx(4.0)

    def test_expanding_sphere_has_zero_rate(self, unit_sphere):
        metric = EvolvingMetric(unit_sphere, 1.0, 2.0)
        assert metric.horizon == math.inf
        assert float(metric.curvature_rate(0.7)) == pytest.approx(0.0)

    def test_static(self, unit_sphere):
        metric = EvolvingMetric.static(unit_sphere)
        assert metric.is_static
        assert float(metric.curvature_rate(3.0)) == pytest.approx(unit_sphere.ricci_constant)

    def test_check_conditions(self, unit_sphere):
        metric = EvolvingMetric(unit_sphere, 1.0, -1.0)
        assert metric.check_conditions(0.5) == []
        assert any("blow-up" in w for w in metric.check_conditions(1.0))

    def test_invalid_scale(self, unit_sphere):
        with pytest.raises(ValueError):
            EvolvingMetric(unit_sphere, 0.0, 1.0)


class TestEnsemble:
    """Test chunked ensembles and the damped transport they carry."""

    def test_aligned_grid(self):
        h, n, nodes = aligned_grid(0.0, np.array([0.02, 0.04, 0.08]), 1e-3)
        assert n == 80 and h == pytest.approx(1e-3)
        assert list(nodes) == [20, 40, 80]
        with pytest.raises(IntervalOutsideGrid):
            aligned_grid(0.5, np.array([0.5]), 1e-3)

    def test_sphere_transport_is_exponential(self, unit_sphere, north_pole, small_mc):
        """Ric = id on the unit 2-sphere, so Q_t = exp(-t) id on every path."""
        ensemble = simulate_ensemble(unit_sphere, None, north_pole, [0.1, 0.3], small_mc)
        assert ensemble.q.shape == (200, 2, 2, 2)
        assert np.allclose(ensemble.q[:, 0], math.exp(-0.1) * np.eye(2))
        assert np.allclose(ensemble.q[:, 1], math.exp(-0.3) * np.eye(2))

    def test_ou_transport(self, plane, small_mc):
        ensemble = simulate_ensemble(plane, LinearOU(2.0, dim=2), np.zeros(2), [0.2], small_mc)
        h = ensemble.step
        n = round(0.2 / h)
        expected = math.exp(-2.0 * h) ** n
        assert np.allclose(ensemble.q[:, -1], expected * np.eye(2))

    def test_potential_transport(self, plane, small_mc):
        ensemble = simulate_ensemble(plane, GradPotential(np.diag([1.0, 3.0])), np.zeros(2), [0.2], small_mc)
        assert np.allclose(ensemble.q[0, -1], np.diag([math.exp(-0.2), math.exp(-0.6)]))

    def test_chunking_and_jobs_do_not_change_results(self, unit_sphere, north_pole):
        base = MonteCarloConfig(n_paths=150, step=0.01, seed=5, chunk_size=150)
        reference = simulate_ensemble(unit_sphere, None, north_pole, [0.2], base)
        for mc in (base.with_overrides(chunk_size=32), base.with_overrides(chunk_size=50, jobs=2)):
            other = simulate_ensemble(unit_sphere, None, north_pole, [0.2], mc)
            assert other.checksum == reference.checksum
            assert np.array_equal(other.points, reference.points)
            assert np.array_equal(other.q, reference.q)

    def test_seed_changes_checksum(self, unit_sphere, north_pole, small_mc):
        a = simulate_ensemble(unit_sphere, None, north_pole, [0.1], small_mc)
        b = simulate_ensemble(unit_sphere, None, north_pole, [0.1], small_mc.with_overrides(seed=8))
        assert a.checksum != b.checksum

    def test_functionals_accumulate(self, plane, small_mc):
        rate = ConstantRate(1.5)
        ensemble = simulate_ensemble(plane, None, np.zeros(2), [0.1, 0.4], small_mc, functionals=[rate])
        assert np.allclose(ensemble.functional(rate, 1), 0.6)
        assert np.allclose(ensemble.functional(rate, 1, 0), 0.45)

    def test_checkpoint_lookup(self, plane, small_mc):
        ensemble = simulate_ensemble(plane, None, np.zeros(2), [0.1, 0.4], small_mc)
        assert ensemble.checkpoint(0.4) == 1
        with pytest.raises(IntervalOutsideGrid):
            ensemble.checkpoint(0.25)
        with pytest.raises(ValueError):
            ensemble.suffix(0)

    def test_exclusions(self, plane):
        mc = MonteCarloConfig(n_paths=100, step=0.01, seed=1, chunk_size=100, guard_radius=0.5)
        ensemble = simulate_ensemble(plane, None, np.zeros(2), [1.0], mc)
        assert ensemble.n_excluded > 0
        assert ensemble.n_included + ensemble.n_excluded == 100
        assert ensemble.flagged
        assert np.all(np.linalg.norm(ensemble.points[:, -1], axis=-1) <= 0.5)

    def test_half_space_boundary_projection(self, small_mc):
        """Paths started on a flat boundary are projected onto the tangent line on contact."""
        space = HalfSpace(2)
        mc = small_mc.with_overrides(step=1e-3)
        ensemble = simulate_ensemble(space, None, np.zeros(2), [0.05], mc)
        hit = ensemble.local_time[:, -1] > 0
        assert hit.sum() > 100
        assert np.allclose(ensemble.q[hit, -1], np.diag([1.0, 0.0]))
        assert np.allclose(ensemble.q[~hit, -1], np.eye(2))
        free = simulate_ensemble(space, None, np.zeros(2), [0.05], mc, boundary=False)
        assert np.allclose(free.q[:, -1], np.eye(2))

    def test_half_space_local_time_law(self):
        """From the boundary, E l_t = 2 sqrt(t / pi) for the normal coordinate."""
        space = HalfSpace(2)
        mc = MonteCarloConfig(n_paths=8000, step=1e-4, seed=17, chunk_size=1000)
        ensemble = simulate_ensemble(space, None, np.zeros(2), [0.25], mc)
        assert ensemble.n_excluded == 0
        mean = float(ensemble.local_time[:, -1].mean())
        assert mean == pytest.approx(2.0 * math.sqrt(0.25 / math.pi), rel=0.03)

    def test_suffix_transport(self, unit_sphere, north_pole, small_mc):
        ensemble = simulate_ensemble(unit_sphere, None, north_pole, [0.1, 0.3], small_mc, keep_suffix=True)
        assert np.allclose(ensemble.suffix(0), math.exp(-0.2) * np.eye(2))
        assert np.allclose(ensemble.suffix(1), np.eye(2))


class TestTransport:
    """Test Q along recorded paths."""

    def test_evolve_Q_on_the_sphere(self, unit_sphere, north_pole):
        path = simulate_path(unit_sphere, None, north_pole, 0.4, 0.01, seed=1, path_index=2)
        oracle = CurvatureOracle(unit_sphere)
        assert np.allclose(evolve_Q(path, oracle), math.exp(-0.4) * np.eye(2))
        assert np.allclose(evolve_Q(path, oracle, (0.1, 0.3)), math.exp(-0.2) * np.eye(2))
        with pytest.raises(IntervalOutsideGrid):
            evolve_Q(path, oracle, (0.3, 0.1))
        with pytest.raises(IntervalOutsideGrid):
            evolve_Q(path, oracle, (0.0, 0.105))

    def test_evolving_oracle(self, unit_sphere):
        metric = EvolvingMetric(unit_sphere, 1.0, 2.0)
        assert CurvatureOracle(unit_sphere, metric=metric).scalar_rate(0.3) == pytest.approx(0.0)

    def test_grid_index(self):
        times = np.linspace(0.0, 1.0, 11)
        assert grid_index(times, 0.3) == 3
        with pytest.raises(IntervalOutsideGrid):
            grid_index(times, 0.35)

    def test_accumulate_weight(self):
        ball = EuclideanBall(2)
        path = simulate_reflected_path(ball, None, np.array([0.0, 1.0]), 0.1, 1e-3, seed=2, path_index=0)
        total = accumulate_weight(path, 2.0, 0.5)
        assert total == pytest.approx(0.2 + 0.5 * path.local_time[-1])
        assert accumulate_weight(path, 2.0, interval=(0.05, 0.05)) == 0.0


class TestDump:
    """Test the binary path dump."""

    def test_dump_round_trip(self, unit_sphere, north_pole, temp_dir):
        paths = [simulate_path(unit_sphere, None, north_pole, 0.1, 0.01, seed=1, path_index=i) for i in range(3)]
        file = write_path_dump(temp_dir / "paths.rlpd", paths)
        assert file.read_bytes()[:4] == MAGIC
        header, dumped = read_path_dump(file)
        assert header["n_paths"] == 3 and header["steps"] == 10 and header["ambient_dim"] == 3
        assert np.array_equal(dumped[2].points, paths[2].points)
        assert np.array_equal(dumped[1].increments, paths[1].increments)

    def test_bad_dump(self, temp_dir):
        file = temp_dir / "bad.rlpd"
        file.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(DumpFormatError):
            read_path_dump(file)
