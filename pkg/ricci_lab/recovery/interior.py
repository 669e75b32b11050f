"""
Interior recovery of Ric^Z(X, X) and of its evolving analogue.

With f pinned at x (grad f(x) = X, Hess f(x) = 0) each quotient below tends to
the curvature in direction X as t -> 0:

    i(p)    (P|grad f|^p - |grad P f|^p) / (p t)
    ii(p,n) (P|grad f_n|^2 - p (P f_n^2 - (P f_n^{2/p})^p) / (4 (p-1) t)) / t
    iii(n)  (4t P|grad f_n|^2 + P f_n^2 log P f_n^2 - P(f_n^2 log f_n^2)) / (4 t^2)
    iv-a    (<grad f, E //^{-1} grad f(X_t)> - <grad f, grad P f>) / t
    iv-b    (<grad P f, E //^{-1} grad f(X_t)> - |grad P f|^2) / t

with f_n = n + f. The n -> infinity limit of ii and iii is extrapolated over
the ladder n in {4, 8, 16} with a' + b'/n.
"""

import logging
import math

import numpy as np

from ricci_lab.frame_sde.ensemble import MonteCarloConfig, PathEnsemble, simulate_ensemble
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.drift import DriftField
from ricci_lab.geometry.functions import ScalarField, pinned_test_function
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.recovery.estimates import (
    RecoveryEstimate,
    build_estimate,
    check_grid,
    check_unit,
    fit_line,
)
from ricci_lab.semigroup.estimators import bismut_samples, start_gradient
from ricci_lab.semigroup.statistics import MeanStatistic, require_paths

logger = logging.getLogger(__name__)

DEFAULT_T_GRID = (0.02, 0.04, 0.08)
DEFAULT_N_LADDER = (4, 8, 16)
INTERIOR_METHODS = ("i", "ii", "iii", "iv-a", "iv-b")
# h <= t_min / STEPS_PER_T_MIN
STEPS_PER_T_MIN = 200


def method_id(method: str, p: float) -> str:
    return f"{method}(p={p:g})" if method in ("i", "ii") else method


def recovery_config(mc: MonteCarloConfig, t_grid, origin: float = 0.0) -> MonteCarloConfig:
    """Shrink the step so the smallest grid time spans at least 200 steps."""
    t_min = min(t_grid) - origin
    return mc.with_overrides(step=min(mc.step, t_min / STEPS_PER_T_MIN))


def interior_quotient(
    method: str,
    ensemble: PathEnsemble,
    f: ScalarField,
    j: int,
    tau: float,
    p: float = 2.0,
    n: float = 0.0,
) -> MeanStatistic:
    """The method's quotient at checkpoint j, tau = t - s."""
    c = ensemble.frame_gradients(f, j)
    grad_sq = np.sum(c**2, axis=-1)
    if method in ("i", "iv-a", "iv-b"):
        g = MeanStatistic.from_samples(bismut_samples(ensemble, f, j))
        if method == "i":
            moment = MeanStatistic.from_samples(grad_sq ** (p / 2.0))
            return (moment - g.norm_sq().power(p / 2.0)) / (p * tau)
        m = MeanStatistic.from_samples(c)
        if method == "iv-a":
            a = start_gradient(ensemble, f)
            return (m.dot(a) - g.dot(a)) / tau
        return (g.dot(m) - g.norm_sq()) / tau

    values = n + ensemble.values(f, j)
    squares = values**2
    energy = MeanStatistic.from_samples(grad_sq)
    second = MeanStatistic.from_samples(squares)
    if method == "ii":
        moment = MeanStatistic.from_samples(values ** (2.0 / p))
        spread = (second - moment.power(p)) * (p / (4.0 * (p - 1.0) * tau))
        return (energy - spread) / tau
    if method == "iii":
        entropy = MeanStatistic.from_samples(squares * np.log(squares))
        return (energy * (4.0 * tau) + second.xlogx() - entropy) / (4.0 * tau**2)
    raise ValueError(f"Unknown interior method '{method}'; expected one of {INTERIOR_METHODS}")


def _recover(
    target: str,
    method: str,
    ensemble: PathEnsemble,
    f: ScalarField,
    t_grid,
    origin: float,
    p: float,
    n_ladder,
) -> RecoveryEstimate:
    require_paths(ensemble.n_included)
    if method not in INTERIOR_METHODS:
        raise ValueError(f"Unknown interior method '{method}'; expected one of {INTERIOR_METHODS}")
    if method in ("i", "ii") and not (p > 0 and (method == "i" or 1.0 < p <= 2.0)):
        raise ValueError(f"p = {p} is outside the range of method {method}")
    t_grid = sorted(float(t) for t in t_grid)
    indices = [ensemble.checkpoint(t) for t in t_grid]
    taus = [t - origin for t in t_grid]
    mid = method_id(method, p)

    if method not in ("ii", "iii"):
        quotients = [interior_quotient(method, ensemble, f, j, tau, p) for j, tau in zip(indices, taus, strict=True)]
        return build_estimate(target, mid, t_grid, quotients, ensemble, origin=origin)

    intercepts, residuals, ladder_quotients = [], [], []
    for n in n_ladder:
        quotients = [
            interior_quotient(method, ensemble, f, j, tau, p, n) for j, tau in zip(indices, taus, strict=True)
        ]
        fit = fit_line(taus, quotients)
        intercepts.append(fit.intercept)
        residuals.append(fit.residual)
        ladder_quotients.append(quotients)
    ladder = fit_line([1.0 / n for n in n_ladder], intercepts)
    return build_estimate(
        target,
        mid,
        t_grid,
        ladder_quotients[-1],
        ensemble,
        intercept=ladder.intercept,
        residual=max(max(residuals), ladder.residual),
        origin=origin,
        n_ladder=list(n_ladder),
        ladder_intercepts=[float(a.value) for a in intercepts],
    )


def recover_ricci(
    manifold: ManifoldModel,
    drift: DriftField | None,
    x: np.ndarray,
    direction: np.ndarray,
    method: str,
    mc: MonteCarloConfig,
    t_grid=DEFAULT_T_GRID,
    p: float = 2.0,
    n_ladder=DEFAULT_N_LADDER,
    allow_unnormalized: bool = False,
    cutoff: float | None = None,
    ensemble: PathEnsemble | None = None,
) -> RecoveryEstimate:
    """Ric^Z(X, X) at x from the small-time limit of one quotient.

    An ensemble with checkpoints at every grid time may be passed in to share
    paths across directions and methods.

    Raises:
        NotUnitDirection: |X| differs from 1 and allow_unnormalized is False
        GridTooCoarse: fewer than three grid times
    """
    x = manifold.check_point(x)
    direction = manifold.tangent_project(x, np.asarray(direction, dtype=float))
    check_unit(float(manifold.norm(x, direction)), allow_unnormalized)
    check_grid(t_grid)
    f = pinned_test_function(manifold, x, direction, cutoff)
    if ensemble is None:
        ensemble = simulate_ensemble(manifold, drift, x, sorted(t_grid), recovery_config(mc, t_grid))
    return _recover("RicZ", method, ensemble, f, t_grid, 0.0, p, n_ladder)


def recover_evolving(
    metric: EvolvingMetric,
    drift: DriftField | None,
    s: float,
    x: np.ndarray,
    direction: np.ndarray,
    method: str,
    mc: MonteCarloConfig,
    t_grid=None,
    p: float = 2.0,
    n_ladder=DEFAULT_N_LADDER,
    allow_unnormalized: bool = False,
    cutoff: float | None = None,
) -> RecoveryEstimate:
    """R^Z_s(X, X) for X of unit length in g_s, from P_{s,t} with t - s -> 0.

    The test function is pinned in the time-s metric: f = sqrt(c(s)) f0 where
    f0 is pinned in g_base with direction sqrt(c(s)) X, so grad^s f(x) = X.
    """
    if method not in INTERIOR_METHODS:
        raise ValueError(f"Unknown evolving method '{method}'; expected one of {INTERIOR_METHODS}")
    t_grid = tuple(s + t for t in DEFAULT_T_GRID) if t_grid is None else tuple(t_grid)
    if not s < min(t_grid) or max(t_grid) >= metric.horizon:
        raise ValueError(f"Need s < t < T_c for every grid time, got s = {s}, grid {t_grid}")
    base = metric.base
    x = base.check_point(x)
    direction = base.tangent_project(x, np.asarray(direction, dtype=float))
    root = math.sqrt(float(metric.scale(s)))
    check_unit(root * float(base.norm(x, direction)), allow_unnormalized)
    check_grid(t_grid)
    metric.check_conditions(max(t_grid), drift)

    f = pinned_test_function(base, x, root * direction, cutoff) * root
    ensemble = simulate_ensemble(
        base, drift, x, sorted(t_grid), recovery_config(mc, t_grid, s), metric=metric, start=s
    )
    estimate = _recover("EvolvingR", method, ensemble, f, t_grid, s, p, n_ladder)
    estimate.details["s"] = s
    return estimate
