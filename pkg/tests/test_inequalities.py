"""Unit tests for curvature bounds, inequality evaluators and reports."""

import json
import math

import numpy as np
import pytest

from ricci_lab.frame_sde.ensemble import MonteCarloConfig
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.functions import (
    CoordinateFunction,
    SineFunction,
    neumann_test_function,
    pinned_test_function,
)
from ricci_lab.geometry.manifolds import Euclidean, EuclideanBall
from ricci_lab.inequalities.bounds import CurvatureBounds, InvalidBounds
from ricci_lab.inequalities.evaluators import (
    InequalitySetup,
    MomentCheckFailed,
    NonPositiveF,
    eval_flow_certificate,
    eval_gradient_estimate,
    eval_gradient_ineq,
    eval_logsobolev_ineq,
    eval_poincare_ineq,
    eval_sharp_bound,
    integral_rhs,
    moment_check,
    prepare_ensemble,
)
from ricci_lab.inequalities.reports import (
    REPORT_COLUMNS,
    InequalityReport,
    Verdict,
    decide,
    reports_from_json,
    reports_to_frame,
    reports_to_json,
    write_reports_csv,
)


@pytest.fixture
def ou_setup(plane, ou, small_mc):
    """OU plane with the exact bounds Ric^Z = id."""
    return InequalitySetup(plane, CurvatureBounds("static", 1.0, 1.0), small_mc, drift=ou)


@pytest.fixture
def sphere_setup(unit_sphere):
    mc = MonteCarloConfig(n_paths=2000, step=0.005, seed=21, r_points=6)
    return InequalitySetup(unit_sphere, CurvatureBounds("static", 1.0, 1.0), mc)


class TestBounds:
    """Test asserted bounds and their validation."""

    def test_lower_above_upper(self):
        with pytest.raises(InvalidBounds):
            CurvatureBounds("static", 2.0, 1.0)

    def test_sigma_only_on_boundary_family(self):
        with pytest.raises(InvalidBounds):
            CurvatureBounds("static", 0.0, 1.0, sigma1=0.5, sigma2=1.0)
        bounds = CurvatureBounds("boundary", 0.0, 0.0, sigma1=1.0, sigma2=1.0)
        assert bounds.to_spec()["sigma1"] == 1.0

    def test_unknown_family(self):
        with pytest.raises(InvalidBounds):
            CurvatureBounds("ricci_soliton")

    def test_pinched_and_constant_lower(self):
        assert CurvatureBounds("static", 0.5, 1.5).is_pinched
        assert not CurvatureBounds("static", 1.0, 1.0).is_pinched
        assert CurvatureBounds("static", 0.5, 1.5).constant_lower == 0.5
        assert CurvatureBounds("boundary", 0.5, 1.5, 0.1, 0.2).constant_lower is None

    def test_check_pointwise(self):
        CurvatureBounds("static", 0.0, 1.0).check_pointwise(np.zeros((3, 2)))


class TestSetup:
    """Test family and diffusion compatibility."""

    def test_evolving_needs_a_metric(self, unit_sphere, small_mc):
        with pytest.raises(InvalidBounds):
            InequalitySetup(unit_sphere, CurvatureBounds("evolving"), small_mc)

    def test_static_rejects_an_evolving_metric(self, unit_sphere, small_mc):
        metric = EvolvingMetric(unit_sphere, 1.0, 2.0)
        with pytest.raises(InvalidBounds):
            InequalitySetup(unit_sphere, CurvatureBounds("static"), small_mc, metric=metric)

    def test_boundary_family_needs_a_boundary(self, plane, small_mc):
        with pytest.raises(InvalidBounds):
            InequalitySetup(plane, CurvatureBounds("boundary"), small_mc)
        with pytest.raises(InvalidBounds):
            InequalitySetup(EuclideanBall(2), CurvatureBounds("static"), small_mc)


class TestGradientInequalities:
    """Test (ii), (ii'), the plain estimate and the sharp bound."""

    @pytest.mark.parametrize("variant", ["ii", "ii'", "plain"])
    def test_equality_case_on_ou(self, ou_setup, variant):
        """Ric^Z = id and grad f constant: both sides vanish on every path."""
        f = CoordinateFunction(ou_setup.manifold, 0)
        report = eval_gradient_ineq(variant, ou_setup, f, np.zeros(2), 0.25)
        assert report.verdict == Verdict.HOLDS
        assert report.lhs.value == pytest.approx(0.0, abs=1e-12)
        assert report.rhs.value == pytest.approx(0.0, abs=1e-12)
        assert report.id.endswith("-s0-t0.25")
        assert report.theorem == "static"

    def test_lhs_matches_closed_form(self, plane, ou, small_mc):
        """|grad P f|^2 - E e^{-2 K1}|grad f|^2 = e^{-2t} - e^{-2 k1 t} for a coordinate."""
        setup = InequalitySetup(plane, CurvatureBounds("static", 0.5, 1.0), small_mc, drift=ou)
        f = CoordinateFunction(plane, 0)
        report = eval_gradient_estimate(setup, f, np.zeros(2), 0.2)
        assert report.lhs.value == pytest.approx(math.exp(-0.4) - math.exp(-0.2), rel=1e-6)
        assert report.verdict == Verdict.HOLDS

    @pytest.mark.parametrize("variant", ["ii", "ii'", "plain"])
    def test_sphere_holds(self, sphere_setup, north_pole, variant):
        f = pinned_test_function(sphere_setup.manifold, north_pole, np.array([1.0, 0.0, 0.0]))
        report = eval_gradient_ineq(variant, sphere_setup, f, north_pole, 0.1)
        assert report.verdict == Verdict.HOLDS

    def test_false_lower_bound_is_violated(self, unit_sphere, north_pole):
        """Asserting Ric >= 1.5 on the unit 2-sphere breaks the gradient estimate."""
        mc = MonteCarloConfig(n_paths=2000, step=0.005, seed=22)
        setup = InequalitySetup(unit_sphere, CurvatureBounds("static", 1.5, 1.5), mc)
        f = pinned_test_function(unit_sphere, north_pole, np.array([1.0, 0.0, 0.0]))
        report = eval_gradient_estimate(setup, f, north_pole, 0.1)
        assert report.verdict == Verdict.VIOLATED
        assert report.margin < 0

    def test_sharp_bound_dominates(self, plane, ou, small_mc):
        setup = InequalitySetup(plane, CurvatureBounds("static", 0.5, 1.5), small_mc, drift=ou)
        f = CoordinateFunction(plane, 0)
        report = eval_sharp_bound(setup, f, np.zeros(2), 0.3)
        assert report.family == "sharp"
        assert report.details["dominates_ii"]
        assert report.details["dominates_ii_prime"]
        assert report.rhs.value <= min(report.details["rhs_ii"], report.details["rhs_ii_prime"]) + 1e-12
        assert report.verdict == Verdict.HOLDS

    def test_sharp_bound_needs_a_pinch(self, ou_setup):
        f = CoordinateFunction(ou_setup.manifold, 0)
        with pytest.raises(InvalidBounds):
            eval_sharp_bound(ou_setup, f, np.zeros(2), 0.3)

    def test_unknown_variant(self, ou_setup):
        with pytest.raises(ValueError):
            eval_gradient_ineq("v", ou_setup, CoordinateFunction(ou_setup.manifold, 0), np.zeros(2), 0.1)

    def test_moment_check_failure(self, plane, small_mc):
        setup = InequalitySetup(plane, CurvatureBounds("static", -400.0, 0.0), small_mc)
        ensemble = prepare_ensemble(setup, np.zeros(2), 1.0)
        with pytest.raises(MomentCheckFailed):
            moment_check(setup, ensemble, 1)


class TestIntegralInequalities:
    """Test the Poincaré-type and log-Sobolev-type forms."""

    def test_poincare_on_the_sphere(self, sphere_setup, north_pole):
        f = pinned_test_function(sphere_setup.manifold, north_pole, np.array([1.0, 0.0, 0.0])) + 3.0
        report = eval_poincare_ineq("iii", sphere_setup, f, north_pole, 1.5, 0.2)
        assert report.verdict == Verdict.HOLDS
        assert report.p == 1.5
        assert report.id == "static-poincare-p1.5-s0-t0.2"

    def test_log_sobolev_on_the_line(self):
        line = Euclidean(1)
        mc = MonteCarloConfig(n_paths=2000, step=0.01, seed=5, r_points=5)
        setup = InequalitySetup(line, CurvatureBounds("static", 0.0, 0.0), mc)
        f = SineFunction(line) + 3.0
        for variant in ("iv", "iv'"):
            report = eval_logsobolev_ineq(variant, setup, f, np.array([0.2]), 0.2)
            assert report.verdict == Verdict.HOLDS

    def test_rhs_weight_is_a_separate_mean(self):
        rng = np.random.default_rng(8)
        r = np.linspace(0.0, 0.2, 4)
        local_time = rng.exponential(0.3, size=(500, 4))
        half = np.exp(0.5 * local_time)
        squares = 1.0 + 2.0 * local_time
        pairings = np.full((500, 4), -3.0)
        weights = np.array([0.5, 1.0, 1.0, 0.5]) * (r[1] - r[0])

        rhs = integral_rhs("iii", r, half, squares, pairings)
        expected = 4.0 * np.sum(weights * ((half.mean(0) - 1.0) * squares.mean(0) - 3.0))
        joint = 4.0 * np.sum(weights * ((half - 1.0) * squares - 3.0).mean(0))
        assert float(rhs.value) == pytest.approx(expected, rel=1e-12)
        assert abs(expected - joint) > 1e-3

        primed = integral_rhs("iii'", r, half, squares, pairings)
        assert float(primed.value) == pytest.approx(
            4.0 * np.sum(weights * (half.mean(0) * squares.mean(0) - 3.0)), rel=1e-12
        )

    def test_rhs_is_clamped_at_zero(self):
        r = np.linspace(0.0, 0.1, 3)
        ones = np.ones((50, 3))
        rhs = integral_rhs("iii'", r, ones, ones, ones)
        assert float(rhs.value) == 0.0
        assert float(rhs.se) == 0.0

    def test_poincare_with_a_boundary_pinch(self):
        ball = EuclideanBall(2)
        mc = MonteCarloConfig(n_paths=1000, step=0.005, seed=31, r_points=5)
        setup = InequalitySetup(ball, CurvatureBounds("boundary", 0.0, 0.0, sigma1=0.5, sigma2=1.5), mc)
        x = np.array([0.0, 0.8])
        f = neumann_test_function(ball, x, np.array([1.0, 0.0])) + 3.0
        for variant in ("iii", "iii'"):
            report = eval_poincare_ineq(variant, setup, f, x, 2.0, 0.1)
            assert report.theorem == "boundary"
            assert report.rhs.value <= 0.0
            assert report.verdict != Verdict.VIOLATED

    def test_non_positive_f(self, sphere_setup, north_pole):
        f = CoordinateFunction(sphere_setup.manifold, 0)
        with pytest.raises(NonPositiveF):
            eval_poincare_ineq("iii", sphere_setup, f, north_pole, 2.0, 0.1)

    def test_p_out_of_range(self, sphere_setup, north_pole):
        f = CoordinateFunction(sphere_setup.manifold, 2)
        with pytest.raises(ValueError):
            eval_poincare_ineq("iii", sphere_setup, f, north_pole, 2.5, 0.1)


class TestFlowCertificate:
    """Test the evolving family against known metric families."""

    def test_expanding_sphere_satisfies_the_flow(self, unit_sphere, north_pole, small_mc):
        """c(t) = 1 + 2t makes Ric_t - d_t g / 2 vanish, so K = 0 is exact."""
        metric = EvolvingMetric.ricci_flow(unit_sphere)
        f = pinned_test_function(unit_sphere, north_pole, np.array([1.0, 0.0, 0.0]))
        reports = eval_flow_certificate(metric, None, 0.0, f, north_pole, 0.0, 0.1, small_mc)
        assert [r.family for r in reports] == ["grad", "grad_prime", "gradient_estimate"]
        assert all(r.verdict == Verdict.HOLDS for r in reports)
        assert all(r.theorem == "evolving" for r in reports)

    def test_wrong_rate_is_falsified(self, unit_sphere, north_pole):
        mc = MonteCarloConfig(n_paths=1000, step=0.005, seed=23)
        metric = EvolvingMetric(unit_sphere, 1.0, 4.0)
        f = pinned_test_function(unit_sphere, north_pole, np.array([1.0, 0.0, 0.0]))
        reports = eval_flow_certificate(metric, None, 0.0, f, north_pole, 0.0, 0.1, mc)
        plain = next(r for r in reports if r.family == "gradient_estimate")
        assert plain.verdict == Verdict.VIOLATED

    def test_horizon(self, unit_sphere, north_pole, small_mc):
        metric = EvolvingMetric(unit_sphere, 1.0, -2.0)
        f = pinned_test_function(unit_sphere, north_pole, np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            eval_flow_certificate(metric, None, 0.0, f, north_pole, 0.0, 0.5, small_mc)


class TestReports:
    """Test verdicts and the report codec."""

    def test_decide(self):
        assert decide(0.0, 0.0) == Verdict.HOLDS
        assert decide(-0.2, 0.1) == Verdict.HOLDS
        assert decide(-0.4, 0.1) == Verdict.VIOLATED
        assert decide(float("nan"), 0.1) == Verdict.INCONCLUSIVE
        assert decide(1.0, float("inf")) == Verdict.INCONCLUSIVE

    def test_json_round_trip(self, ou_setup):
        f = CoordinateFunction(ou_setup.manifold, 0)
        reports = [eval_gradient_ineq(v, ou_setup, f, np.zeros(2), 0.25) for v in ("ii", "plain")]
        text = reports_to_json(reports)
        assert json.loads(text)[0]["verdict"] == "HOLDS"
        restored = reports_from_json(text)
        assert [r.id for r in restored] == [r.id for r in reports]
        assert restored[1].to_dict() == json.loads(text)[1]

    def test_frame_and_csv(self, ou_setup, temp_dir):
        f = CoordinateFunction(ou_setup.manifold, 0)
        reports = [eval_gradient_ineq("ii'", ou_setup, f, np.zeros(2), 0.25)]
        frame = reports_to_frame(reports)
        assert list(frame.columns) == REPORT_COLUMNS
        file = write_reports_csv(reports, temp_dir / "reports.csv")
        assert file.read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)

    def test_from_dict_defaults(self):
        report = InequalityReport.from_dict(
            {
                "id": "static-grad-s0-t1",
                "family": "grad",
                "theorem": "static",
                "lhs": 0.1,
                "rhs": 0.2,
                "se_lhs": 0.01,
                "se_rhs": 0.02,
                "margin": 0.1,
                "se_margin": 0.01,
                "verdict": "HOLDS",
                "n_paths": 100,
                "seed": 1,
                "t": 1.0,
            }
        )
        assert report.s == 0.0
        assert report.lhs.n_excluded == 0
        assert report.n_paths == 100
