"""
Evaluators for the pinched-curvature functional inequalities.

All terms of one report come from one ensemble, so the margin rhs - lhs carries
the covariance of its two sides. The static, boundary and evolving statements
share one code path: every constant of the static family is the path
functional K_i[r, t] of a constant rate, which the ensemble records exactly.

Notation in this module, all in the orthonormal frame at the start point:
    A    grad f(x)
    c_r  //_{s,r}^{-1} grad f(X_r)
    G    E[Q_{s,t} c_t]             (Bismut estimate of grad P_{s,t} f(x))
    g_r  Q_{r,t} c_t                (single-sample grad P_{r,t} f(X_r))
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ricci_lab.frame_sde.ensemble import MonteCarloConfig, PathEnsemble, simulate_ensemble
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.functions import ScalarField
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.inequalities.bounds import CurvatureBounds, InvalidBounds
from ricci_lab.inequalities.reports import VARIANT_FAMILIES, InequalityReport, Verdict
from ricci_lab.semigroup.estimators import bismut_samples, phi, start_gradient
from ricci_lab.semigroup.statistics import MeanStatistic, require_paths

logger = logging.getLogger(__name__)

# exp(-(2 + 0.5) K1) must have a finite sample moment
MOMENT_EXPONENT = 2.5
DEGENERACY_THRESHOLD = 1e-12


class MomentCheckFailed(RuntimeError):
    pass


class NonPositiveF(ValueError):
    pass


class DegenerateOptimizer(ArithmeticError):
    pass


@dataclass(frozen=True)
class InequalitySetup:
    """The diffusion and the asserted bounds an inequality is checked against."""

    manifold: ManifoldModel
    bounds: CurvatureBounds
    mc: MonteCarloConfig
    drift: DriftField = ZeroDrift()
    metric: EvolvingMetric | None = None
    config_hash: str = ""

    def __post_init__(self):
        family = self.bounds.family
        if family == "evolving" and self.metric is None:
            raise InvalidBounds("The evolving family needs an evolving metric")
        if family != "evolving" and self.metric is not None and not self.metric.is_static:
            raise InvalidBounds(f"The {family} family needs a static metric")
        if family == "boundary" and not self.manifold.has_boundary:
            raise InvalidBounds(f"The boundary family needs a domain with boundary, got {self.manifold.kind}")
        if family == "static" and self.manifold.has_boundary:
            raise InvalidBounds("Use the boundary family on domains with boundary")

    @property
    def theorem(self) -> str:
        return self.bounds.family


def prepare_ensemble(
    setup: InequalitySetup, x: np.ndarray, t: float, s: float = 0.0, r_grid: bool = False
) -> PathEnsemble:
    """Ensemble for checks at (s, t); the r-grid variant also serves the integral forms."""
    if t <= s:
        raise ValueError(f"Need s < t, got s = {s}, t = {t}")
    points = setup.mc.r_points if r_grid else 2
    return simulate_ensemble(
        setup.manifold,
        setup.drift,
        x,
        np.linspace(s, t, points),
        setup.mc,
        metric=setup.metric,
        start=s,
        functionals=setup.bounds.functionals,
        keep_suffix=r_grid,
    )


def moment_check(setup: InequalitySetup, ensemble: PathEnsemble, jt: int) -> float:
    """Empirical E[exp(-2.5 K1[s, t])]; finite with relative SE at most 1."""
    k1 = ensemble.functional(setup.bounds.lower_functional, jt)
    with np.errstate(over="ignore"):
        stat = MeanStatistic.from_samples(np.exp(-MOMENT_EXPONENT * k1))
    value, se = float(stat.value), float(stat.se)
    logger.info("Moment check E[exp(-%.1f K1)] = %.6g (SE %.3g)", MOMENT_EXPONENT, value, se)
    if not np.isfinite(value) or not np.isfinite(se) or se > abs(value):
        raise MomentCheckFailed(f"Sample moment E[exp(-{MOMENT_EXPONENT} K1)] = {value} (SE {se})")
    return value


def _checkpoints(ensemble: PathEnsemble, s: float, t: float) -> tuple[int, int]:
    if abs(ensemble.start - s) > 1e-12:
        raise ValueError(f"Ensemble starts at {ensemble.start}, the check at s = {s}")
    return ensemble.checkpoint(s), ensemble.checkpoint(t)


@dataclass
class GradientTerms:
    a: np.ndarray
    g: MeanStatistic
    e: MeanStatistic
    v: MeanStatistic
    lhs: MeanStatistic


def gradient_terms(
    setup: InequalitySetup, ensemble: PathEnsemble, f: ScalarField, s: float, t: float
) -> GradientTerms:
    require_paths(ensemble.n_included)
    js, jt = _checkpoints(ensemble, s, t)
    moment_check(setup, ensemble, jt)
    lower, upper = setup.bounds.functionals
    k1 = ensemble.functional(lower, jt, js)
    k2 = ensemble.functional(upper, jt, js)
    c_t = ensemble.frame_gradients(f, jt)

    g = MeanStatistic.from_samples(bismut_samples(ensemble, f, jt))
    e = MeanStatistic.from_samples(np.exp(0.5 * (k2 - k1)))
    v = MeanStatistic.from_samples(np.exp(-k1)[:, None] * c_t)
    w = MeanStatistic.from_samples(np.exp(-2.0 * k1) * np.sum(c_t**2, axis=-1))
    return GradientTerms(start_gradient(ensemble, f), g, e, v, g.norm_sq() - w)


def _report(setup, variant, lhs, rhs, ensemble, t, s, p=None, verdict=None, **details):
    report = InequalityReport.build(
        VARIANT_FAMILIES[variant],
        setup.theorem,
        lhs,
        rhs,
        ensemble,
        setup.mc.z,
        setup.mc.atol,
        t,
        s=s,
        p=p,
        verdict=verdict,
        config_hash=setup.config_hash,
        **details,
    )
    log = logger.warning if report.verdict == Verdict.VIOLATED else logger.info
    log("%s: lhs=%.6g rhs=%.6g margin=%.3g (SE %.3g) %s", report.id, report.lhs.value,
        report.rhs.value, report.margin, report.se_margin, report.verdict.value)
    return report


def eval_gradient_ineq(
    variant: str,
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    s: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> InequalityReport:
    """Gradient inequality (ii), its primed form (ii') or the plain gradient estimate.

    (ii):    |G|^2 - E[e^{-2K1}|c_t|^2] <= 4[(E e^{(K2-K1)/2} - 1)|A|^2 + <A, G> - <A, E e^{-K1} c_t>] ^ 0
    (ii'):   same left side <= 4[E e^{(K2-K1)/2} |G|^2 - <G, E e^{-K1} c_t>] ^ 0
    plain:   same left side <= 0

    Raises:
        MomentCheckFailed: exp(-2.5 K1) has no usable sample moment
        TooFewPaths: fewer than 100 included paths
    """
    if variant not in ("ii", "ii'", "plain"):
        raise ValueError(f"Unknown gradient variant '{variant}'")
    ensemble = ensemble or prepare_ensemble(setup, x, t, s)
    terms = gradient_terms(setup, ensemble, f, s, t)
    a, g, e, v = terms.a, terms.g, terms.e, terms.v
    if variant == "ii":
        rhs = ((e - 1.0) * float(a @ a) + g.dot(a) - v.dot(a)) * 4.0
    elif variant == "ii'":
        rhs = (e * g.norm_sq() - g.dot(v)) * 4.0
    else:
        rhs = MeanStatistic.constant(0.0, ensemble.n_included)
    return _report(setup, variant, terms.lhs, rhs.minimum_zero(), ensemble, t, s)


def eval_gradient_estimate(
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    s: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> InequalityReport:
    """|grad P f|^2 <= E[e^{-2K1} |//^{-1} grad f(X_t)|^2], the lower-bound statement alone."""
    return eval_gradient_ineq("plain", setup, f, x, t, s, ensemble)


def sharp_bound_terms(terms: GradientTerms) -> tuple[MeanStatistic, float]:
    """Minimized right-hand side over a + b = 1 and its optimizer a0.

    Raises:
        DegenerateOptimizer: (E - 1)|A - G|^2 is at most 1e-12
    """
    a, g, e, v = terms.a, terms.g, terms.e, terms.v
    diff = -g + a
    alpha = (e - 1.0) * diff.norm_sq()
    if not float(alpha.value) > DEGENERACY_THRESHOLD:
        raise DegenerateOptimizer(f"Optimizer denominator {float(alpha.value):.3g} underflows")
    beta = diff.dot(g * (e * 2.0 - 1.0) - v)
    rhs = (e * g.norm_sq() - g.dot(v)) * 4.0 - beta * beta / alpha
    a0 = -float(beta.value) / (2.0 * float(alpha.value))
    return rhs.minimum_zero(), a0


def eval_sharp_bound(
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    s: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> InequalityReport:
    """Gradient inequality with the right-hand side minimized over a + b = 1.

    Also records whether the minimized bound is below the (ii) and (ii') bounds
    within z SE. A degenerate optimizer gives an INCONCLUSIVE report whose
    right-hand side is the (ii') bound.
    """
    if not setup.bounds.k1 < setup.bounds.k2:
        raise InvalidBounds(f"The sharp bound needs k1 < k2, got {setup.bounds.k1}, {setup.bounds.k2}")
    ensemble = ensemble or prepare_ensemble(setup, x, t, s)
    terms = gradient_terms(setup, ensemble, f, s, t)
    a, g, e, v = terms.a, terms.g, terms.e, terms.v
    rhs_ii = (((e - 1.0) * float(a @ a) + g.dot(a) - v.dot(a)) * 4.0).minimum_zero()
    rhs_ii_prime = ((e * g.norm_sq() - g.dot(v)) * 4.0).minimum_zero()
    try:
        rhs, a0 = sharp_bound_terms(terms)
    except DegenerateOptimizer as e:
        logger.warning("Sharp bound at t=%g: %s", t, e)
        return _report(
            setup, "sharp", terms.lhs, rhs_ii_prime, ensemble, t, s,
            verdict=Verdict.INCONCLUSIVE, degenerate=True,
        )

    z = setup.mc.z
    gap_ii, gap_ii_prime = rhs_ii - rhs, rhs_ii_prime - rhs
    return _report(
        setup, "sharp", terms.lhs, rhs, ensemble, t, s,
        a0=a0,
        rhs_ii=float(rhs_ii.value),
        rhs_ii_prime=float(rhs_ii_prime.value),
        dominates_ii=bool(gap_ii.value >= -z * gap_ii.se),
        dominates_ii_prime=bool(gap_ii_prime.value >= -z * gap_ii_prime.se),
    )


def _integral_sides(
    variant: str,
    setup: InequalitySetup,
    ensemble: PathEnsemble,
    f: ScalarField,
    s: float,
    t: float,
) -> tuple[MeanStatistic, MeanStatistic, np.ndarray]:
    """Second left-hand term and the right-hand side of the integral forms.

    Returns:
        (smoothing term subtracted on the left, clamped right-hand side, f(X_t))
    """
    require_paths(ensemble.n_included)
    js, jt = _checkpoints(ensemble, s, t)
    moment_check(setup, ensemble, jt)
    if jt != len(ensemble.times) - 1:
        raise ValueError(f"Integral forms need t = {t} to be the ensemble horizon")
    nodes = np.arange(js, jt + 1)
    if len(nodes) < 2:
        raise ValueError("Integral forms need at least two r-grid nodes between s and t")
    r = ensemble.times[nodes]
    lower, upper = setup.bounds.functionals

    values = ensemble.values(f, jt)
    if np.any(values <= 0) or np.any(np.asarray(f.value(ensemble.x0)) <= 0):
        raise NonPositiveF(f"Test function takes non-positive values (min {values.min():.3g})")

    c_t = ensemble.frame_gradients(f, jt)
    grad_sq = np.sum(c_t**2, axis=-1)
    k1_tail = np.stack([ensemble.functional(lower, jt, j) for j in nodes], axis=1)
    k2_tail = np.stack([ensemble.functional(upper, jt, j) for j in nodes], axis=1)

    k1 = setup.bounds.constant_lower
    if setup.theorem == "static" and k1 is not None:
        smoothing = MeanStatistic.from_samples(grad_sq) * phi(k1, t - s)
    else:
        weights = trapezoid(np.exp(-2.0 * k1_tail), r, axis=1)
        smoothing = MeanStatistic.from_samples(weights * grad_sq)

    half = np.exp(0.5 * (k2_tail - k1_tail))
    squares = np.empty_like(half)
    pairings = np.empty_like(half)
    for col, j in enumerate(nodes):
        damp = np.exp(-k1_tail[:, col])
        g_r = np.einsum("nij,nj->ni", ensemble.suffix(j), c_t)
        if variant in ("iii", "iv"):
            c_r = ensemble.frame_gradients(f, j)
            squares[:, col] = np.sum(c_r**2, axis=-1)
            pairings[:, col] = np.sum(c_r * (g_r - damp[:, None] * c_t), axis=-1)
        else:
            squares[:, col] = np.sum(g_r**2, axis=-1)
            pairings[:, col] = -damp * np.sum(g_r * c_t, axis=-1)
    rhs = integral_rhs(variant, r, half, squares, pairings)
    return smoothing, rhs, values


def integral_rhs(
    variant: str,
    r: np.ndarray,
    half: np.ndarray,
    squares: np.ndarray,
    pairings: np.ndarray,
) -> MeanStatistic:
    """4 int (E[half] - 1) E[square] + E[pairing] dr, clamped at zero.

    The weight E[half] and the square are separate means; (iii') keeps the
    weight without the -1. Sample arrays have shape (n_paths, len(r)).
    """
    weight = MeanStatistic.from_samples(half)
    if variant in ("iii", "iv"):
        weight = weight - 1.0
    integrand = weight * MeanStatistic.from_samples(squares) + MeanStatistic.from_samples(pairings)
    quadrature = trapezoid(np.eye(len(r)), r, axis=1)
    return ((integrand * quadrature).sum() * 4.0).minimum_zero()


def eval_poincare_ineq(
    variant: str,
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    p: float,
    t: float,
    s: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> InequalityReport:
    """Poincaré-type inequality (iii) or (iii') for p in (1, 2].

    Left side: p (P f^2 - (P f^{2/p})^p) / (4(p - 1)) minus the smoothed gradient term.

    Raises:
        NonPositiveF: f is not positive where the paths end
    """
    if variant not in ("iii", "iii'"):
        raise ValueError(f"Unknown Poincaré variant '{variant}'")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    ensemble = ensemble or prepare_ensemble(setup, x, t, s, r_grid=True)
    smoothing, rhs, values = _integral_sides(variant, setup, ensemble, f, s, t)
    second = MeanStatistic.from_samples(values**2)
    moment = MeanStatistic.from_samples(values ** (2.0 / p))
    lhs = (second - moment.power(p)) * (p / (4.0 * (p - 1.0))) - smoothing
    return _report(setup, variant, lhs, rhs, ensemble, t, s, p=p)


def eval_logsobolev_ineq(
    variant: str,
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    s: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> InequalityReport:
    """Log-Sobolev-type inequality (iv) or (iv').

    Left side: (P(f^2 log f^2) - P f^2 log P f^2) / 4 minus the smoothed gradient term.
    """
    if variant not in ("iv", "iv'"):
        raise ValueError(f"Unknown log-Sobolev variant '{variant}'")
    ensemble = ensemble or prepare_ensemble(setup, x, t, s, r_grid=True)
    smoothing, rhs, values = _integral_sides(
        "iii" if variant == "iv" else "iii'", setup, ensemble, f, s, t
    )
    squares = values**2
    entropy = MeanStatistic.from_samples(squares * np.log(squares)) - MeanStatistic.from_samples(
        squares
    ).xlogx()
    lhs = entropy * 0.25 - smoothing
    return _report(setup, variant, lhs, rhs, ensemble, t, s)


def eval_flow_certificate(
    metric: EvolvingMetric,
    drift: DriftField | None,
    k: float,
    f: ScalarField,
    x: np.ndarray,
    s: float,
    t: float,
    mc: MonteCarloConfig,
    include_plain: bool = True,
    config_hash: str = "",
) -> list[InequalityReport]:
    """Check a metric family against the flow 1/2 d_t g = Ric_t - nabla Z - K g.

    Runs (ii) and (ii') of the evolving family with K1 = K2 = K on one ensemble,
    plus the plain gradient estimate. All HOLDS is consistent with the flow; any
    VIOLATED report falsifies it.
    """
    if t >= metric.horizon:
        raise ValueError(f"t = {t} reaches the metric blow-up time {metric.horizon}")
    metric.check_conditions(t, drift)
    setup = InequalitySetup(
        manifold=metric.base,
        bounds=CurvatureBounds("evolving", k1=k, k2=k),
        mc=mc,
        drift=drift or ZeroDrift(),
        metric=metric,
        config_hash=config_hash,
    )
    ensemble = prepare_ensemble(setup, x, t, s)
    variants = ["ii", "ii'"] + (["plain"] if include_plain else [])
    reports = [eval_gradient_ineq(v, setup, f, x, t, s, ensemble=ensemble) for v in variants]
    violated = sum(r.verdict == Verdict.VIOLATED for r in reports)
    logger.info("Flow certificate on [%g, %g]: %d of %d reports violated", s, t, violated, len(reports))
    return reports
