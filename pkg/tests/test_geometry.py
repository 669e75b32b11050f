"""Unit tests for the model spaces, drifts and test functions."""

import math

import numpy as np
import pytest

from ricci_lab.geometry.drift import (
    GradPotential,
    IncompatibleDrift,
    LinearOU,
    ZeroDrift,
    drift_from_spec,
    ricci_z_endo,
)
from ricci_lab.geometry.functions import (
    CoordinateFunction,
    CutoffTooLarge,
    QuadraticFunction,
    SineFunction,
    default_cutoff,
    neumann_test_function,
    pinned_test_function,
    quintic_cutoff,
)
from ricci_lab.geometry.manifolds import (
    Euclidean,
    EuclideanBall,
    FlatTorus,
    HalfSpace,
    Hyperbolic,
    NotABoundaryPoint,
    OutsideInjectivityRadius,
    PointOutsideChart,
    Sphere,
    manifold_from_spec,
)


class TestManifolds:
    """Test the closed-form geometry oracles."""

    def test_sphere_exp_log_round_trip(self, unit_sphere, north_pole):
        """log inverts exp for short tangent vectors and exp stays on the sphere."""
        v = np.array([0.3, -0.4, 0.0])
        y = unit_sphere.exp_map(north_pole, v)
        assert np.isclose(np.linalg.norm(y), 1.0)
        assert np.allclose(unit_sphere.log_map(north_pole, y), v)
        assert np.isclose(unit_sphere.distance(north_pole, y), 0.5)

    def test_sphere_antipodal_log_raises(self, unit_sphere, north_pole):
        with pytest.raises(OutsideInjectivityRadius):
            unit_sphere.log_map(north_pole, -north_pole)

    def test_sphere_rejects_points_off_the_sphere(self, unit_sphere):
        with pytest.raises(PointOutsideChart):
            unit_sphere.check_point(np.array([0.0, 0.0, 1.5]))
        with pytest.raises(PointOutsideChart):
            unit_sphere.check_point(np.array([1.0, 0.0]))

    def test_sphere_frame_at_north_pole(self, unit_sphere, north_pole):
        """The Householder basis is the first two axes at the north pole."""
        frame = unit_sphere.orthonormal_frame(north_pole)
        assert np.allclose(frame, np.eye(3)[:, :2])

    def test_sphere_transport_is_isometric_and_tangent(self, unit_sphere, north_pole):
        frame = unit_sphere.orthonormal_frame(north_pole)
        v = np.array([0.4, 0.2, 0.0])
        y = unit_sphere.exp_map(north_pole, v)
        moved = unit_sphere.transport_along(north_pole, v, frame)
        assert np.allclose(moved.T @ moved, np.eye(2))
        assert np.allclose(y @ moved, 0.0)

    def test_sphere_transport_of_velocity(self, unit_sphere, north_pole):
        """The geodesic velocity is carried to the velocity at the end point."""
        v = np.array([0.0, 0.7, 0.0])
        moved = unit_sphere.transport_along(north_pole, v, v)
        expected = 0.7 * np.array([0.0, math.cos(0.7), -math.sin(0.7)])
        assert np.allclose(moved, expected)

    def test_sphere_ricci_constant(self):
        sphere = Sphere(3, radius=2.0)
        assert sphere.ricci_constant == pytest.approx(0.5)
        x = np.array([0.0, 0.0, 0.0, 2.0])
        assert np.allclose(sphere.ricci_endo(x), 0.5 * np.eye(3))
        assert sphere.injectivity_radius == pytest.approx(2.0 * math.pi)

    def test_hyperbolic_distance_from_origin(self, hyperbolic_plane):
        y = np.array([0.5, 0.0])
        assert hyperbolic_plane.distance(np.zeros(2), y) == pytest.approx(2.0 * math.atanh(0.5))

    def test_hyperbolic_exp_log_round_trip(self, hyperbolic_plane):
        x = np.array([0.2, -0.1])
        v = np.array([0.05, 0.08])
        y = hyperbolic_plane.exp_map(x, v)
        assert np.allclose(hyperbolic_plane.log_map(x, y), v, atol=1e-10)
        assert hyperbolic_plane.distance(x, y) == pytest.approx(float(hyperbolic_plane.norm(x, v)))

    def test_hyperbolic_transport_preserves_norm(self, hyperbolic_plane):
        x = np.array([0.3, 0.1])
        v = np.array([-0.1, 0.2])
        w = np.array([0.4, -0.3])
        y = hyperbolic_plane.exp_map(x, v)
        moved = hyperbolic_plane.transport_along(x, v, w)
        assert float(hyperbolic_plane.norm(y, moved)) == pytest.approx(float(hyperbolic_plane.norm(x, w)))

    @pytest.mark.parametrize(
        "manifold,x,v",
        [
            (Hyperbolic(2), np.array([0.3, -0.2]), np.array([0.5, 0.4])),
            (Sphere(2), np.array([0.6, 0.0, 0.8]), np.array([0.0, 1.0, 0.0])),
        ],
    )
    def test_christoffel_matches_geodesic_acceleration(self, manifold, x, v):
        """exp_x(sv) = x + sv - s^2/2 Gamma(v, v) + O(s^3)."""
        s = 1e-3
        second = (manifold.exp_map(x, s * v) + manifold.exp_map(x, -s * v) - 2.0 * x) / s**2
        gamma = np.einsum("kij,i,j->k", manifold.christoffel_at(x), v, v)
        assert np.allclose(second, -gamma, atol=1e-4)

    def test_transport_along_a_quarter_meridian(self, unit_sphere, north_pole):
        equator = np.array([1.0, 0.0, 0.0])
        moved = unit_sphere.transport_geodesic(north_pole, equator, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(moved, [0.0, 0.0, -1.0], atol=1e-12)
        kept = unit_sphere.transport_geodesic(north_pole, equator, np.array([0.0, 1.0, 0.0]))
        assert np.allclose(kept, [0.0, 1.0, 0.0], atol=1e-12)

    def test_hyperbolic_metric_and_curvature(self):
        space = Hyperbolic(3, scale=2.0)
        assert np.allclose(space.metric_at(np.zeros(3)), 16.0 * np.eye(3))
        assert space.ricci_constant == pytest.approx(-0.5)

    def test_orthonormalize_repairs_a_frame(self, hyperbolic_plane):
        x = np.array([0.4, 0.2])
        u = np.array([[1.0, 0.3], [0.1, 0.8]])
        repaired = hyperbolic_plane.orthonormalize(x, u)
        gram = hyperbolic_plane.metric_scale(x) * repaired.T @ repaired
        assert np.allclose(gram, np.eye(2))

    def test_torus_cut_locus(self):
        torus = FlatTorus(1, periods=2 * math.pi)
        assert np.allclose(torus.log_map(np.array([0.1]), np.array([6.2])), [6.2 - 0.1 - 2 * math.pi])
        with pytest.raises(OutsideInjectivityRadius):
            torus.log_map(np.array([0.0]), np.array([math.pi]))

    def test_ball_boundary_data(self):
        ball = EuclideanBall(2, radius=2.0)
        data = ball.boundary_data(np.array([0.0, 2.0]))
        assert np.allclose(data.normal, [0.0, -1.0])
        assert np.allclose(data.second_fundamental_form, np.diag([0.5, 0.0]))
        assert ball.boundary_curvature == pytest.approx(0.5)
        with pytest.raises(NotABoundaryPoint):
            ball.boundary_data(np.array([0.0, 1.0]))

    def test_ball_reflection(self):
        ball = EuclideanBall(2)
        proj, push, normal = ball.reflect(np.array([[0.0, 1.2], [0.3, 0.4]]))
        assert np.allclose(proj, [[0.0, 1.0], [0.3, 0.4]])
        assert np.allclose(push, [0.2, 0.0])
        assert np.allclose(normal, [[0.0, -1.0], [0.0, 0.0]])

    def test_half_space_reflection(self):
        space = HalfSpace(2)
        proj, push, normal = space.reflect(np.array([1.0, -0.3]))
        assert np.allclose(proj, [1.0, 0.0])
        assert push == pytest.approx(0.3)
        assert np.allclose(normal, [0.0, 1.0])
        data = space.boundary_data(np.array([0.5, 0.0]))
        assert np.allclose(data.second_fundamental_form, 0.0)

    def test_spec_round_trip(self):
        for manifold in (Euclidean(3), Sphere(2, 1.5), Hyperbolic(2, 0.5), EuclideanBall(2, 3.0)):
            assert manifold_from_spec(manifold.to_spec()) == manifold

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="Unknown manifold kind"):
            manifold_from_spec({"kind": "klein_bottle"})

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            Sphere(2, radius=0.0)
        with pytest.raises(ValueError):
            Euclidean(0)


class TestDrift:
    """Test drift fields and Ric^Z."""

    def test_ou_shifts_ricci(self, plane):
        endo = ricci_z_endo(plane, LinearOU(2.0, dim=2), np.array([0.3, -0.2]))
        assert np.allclose(endo, 2.0 * np.eye(2))

    def test_gradient_potential(self, plane):
        drift = GradPotential(np.diag([1.0, 2.0]))
        assert np.allclose(ricci_z_endo(plane, drift, np.zeros(2)), np.diag([1.0, 2.0]))
        assert np.allclose(drift.value(np.array([1.0, 1.0])), [-1.0, -2.0])

    def test_sphere_without_drift(self, unit_sphere, north_pole):
        assert np.allclose(ricci_z_endo(unit_sphere, ZeroDrift(), north_pole), np.eye(2))

    def test_incompatible_drift(self, unit_sphere):
        with pytest.raises(IncompatibleDrift):
            LinearOU(1.0).check_compatible(unit_sphere)
        with pytest.raises(IncompatibleDrift):
            LinearOU(1.0).check_compatible(FlatTorus(2))

    def test_drift_from_spec(self):
        drift = drift_from_spec({"kind": "linear_ou", "rate": 0.5}, 2)
        assert np.allclose(drift.constant_jacobian, -0.5 * np.eye(2))
        assert drift_from_spec(None, 2).is_zero
        with pytest.raises(ValueError, match="hessian"):
            drift_from_spec({"kind": "grad_potential"}, 2)
        with pytest.raises(ValueError, match="Unknown drift kind"):
            drift_from_spec({"kind": "swirl"}, 2)

    def test_potential_must_be_symmetric(self):
        with pytest.raises(ValueError):
            GradPotential(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestTestFunctions:
    """Test scalar fields and the pinned and Neumann constructions."""

    def test_quintic_cutoff(self):
        chi, dchi = quintic_cutoff(np.array([0.0, 0.5, 1.0, 1.5]), 1.0)
        assert np.allclose(chi, [1.0, 1.0, 0.0, 0.0])
        assert np.allclose(dchi, 0.0)
        chi, _ = quintic_cutoff(np.array([0.75]), 1.0)
        assert chi[0] == pytest.approx(0.5)
        chi, dchi = quintic_cutoff(np.array([10.0]), math.inf)
        assert chi[0] == 1.0 and dchi[0] == 0.0

    def test_field_arithmetic(self, plane):
        f = SineFunction(plane, index=0) * 2.0 + 3.0
        y = np.array([math.pi / 2, 0.0])
        assert float(f.value(y)) == pytest.approx(5.0)
        assert np.allclose(f.differential(np.zeros(2)), [2.0, 0.0])

    def test_laplacian_of_quadratic(self, plane):
        f = QuadraticFunction(plane, np.array([[2.0, 0.5], [0.5, 4.0]]), np.zeros(2))
        assert float(f.laplacian(np.array([0.3, 0.1]))) == pytest.approx(6.0, rel=1e-6)

    def test_sphere_height_is_an_eigenfunction(self, unit_sphere):
        f = CoordinateFunction(unit_sphere, index=2)
        x = np.array([0.6, 0.0, 0.8])
        assert float(f.laplacian(x)) == pytest.approx(-1.6, rel=1e-6)

    @pytest.mark.parametrize(
        "manifold,x,direction",
        [
            (Euclidean(2), np.array([0.2, -0.4]), np.array([0.6, 0.8])),
            (Sphere(2), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])),
            (Sphere(2), np.array([0.6, 0.0, 0.8]), np.array([0.0, 1.0, 0.0])),
            (Hyperbolic(2), np.array([0.2, 0.1]), np.array([0.3, -0.2])),
        ],
    )
    def test_pinned_gradient_and_hessian(self, manifold, x, direction):
        """grad f(x) = X and Hess f(x) = 0 on the tangent space."""
        f = pinned_test_function(manifold, x, direction)
        assert np.allclose(f.gradient(x), manifold.tangent_project(x, direction), atol=1e-9)
        frame = manifold.orthonormal_frame(x)
        hessian = frame.T @ f.hessian(x) @ frame
        assert np.allclose(hessian, 0.0, atol=1e-5)

    def test_pinned_support(self, plane):
        f = pinned_test_function(plane, np.zeros(2), np.array([1.0, 0.0]), cutoff=1.0)
        assert float(f.value(np.array([1.5, 0.0]))) == 0.0
        assert float(f.value(np.array([0.4, 0.3]))) == pytest.approx(0.4)

    def test_pinned_rejects_bad_inputs(self, unit_sphere, north_pole):
        with pytest.raises(CutoffTooLarge):
            pinned_test_function(unit_sphere, north_pole, np.array([1.0, 0.0, 0.0]), cutoff=math.pi)
        with pytest.raises(ValueError):
            pinned_test_function(unit_sphere, north_pole, np.array([0.0, 0.0, 1.0]))
        ball = EuclideanBall(2)
        with pytest.raises(CutoffTooLarge):
            pinned_test_function(ball, np.array([0.0, 0.5]), np.array([1.0, 0.0]), cutoff=0.6)

    def test_default_cutoff(self, unit_sphere, north_pole):
        assert default_cutoff(unit_sphere, north_pole) == pytest.approx(2.0)
        assert default_cutoff(EuclideanBall(2), np.array([0.0, 0.5])) == pytest.approx(0.45)

    def test_neumann_on_the_ball(self):
        """Zero normal derivative on the sphere |y| = R and grad f(x) = X."""
        ball = EuclideanBall(2, radius=1.0)
        x = np.array([0.0, 0.5])
        f = neumann_test_function(ball, x, np.array([2.0, 0.0]))
        assert np.allclose(f.gradient(x), [2.0, 0.0])
        angles = np.linspace(0.0, 2.0 * math.pi, 13)
        boundary = np.column_stack([np.cos(angles), np.sin(angles)])
        assert np.allclose(np.sum(f.differential(boundary) * boundary, axis=-1), 0.0)

    def test_neumann_on_the_half_space(self):
        space = HalfSpace(2)
        f = neumann_test_function(space, np.zeros(2), np.array([1.0, 0.0]))
        assert np.allclose(f.differential(np.array([[0.3, 0.0], [-0.2, 1.0]])), [[1.0, 0.0]] * 2)
        with pytest.raises(ValueError):
            neumann_test_function(space, np.zeros(2), np.array([1.0, 0.5]))

    def test_neumann_rejects_bad_inputs(self, plane):
        with pytest.raises(NotABoundaryPoint):
            neumann_test_function(plane, np.zeros(2), np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="orthogonal"):
            neumann_test_function(EuclideanBall(2), np.array([0.0, 0.5]), np.array([0.0, 1.0]))
