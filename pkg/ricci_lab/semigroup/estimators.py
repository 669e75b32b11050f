"""
Monte-Carlo estimators for P_{s,t} f, its gradient and weighted transport pairings.

Every estimator either simulates its own ensemble or reads a shared one, which
is how the inequality evaluators keep both sides of a check on common random
numbers. Gradients are reported in the orthonormal frame at the start point.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ricci_lab.frame_sde.ensemble import MonteCarloConfig, PathEnsemble, PathFunctional, simulate_ensemble
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.frame_sde.paths import initial_frame
from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.functions import ScalarField
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.semigroup.statistics import McEstimate, MeanStatistic, require_paths, stack

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1e-8


class NestedDepthExceeded(ValueError):
    pass


def phi(k: float, tau: float) -> float:
    """(1 - exp(-2 k tau)) / (2 k), with the limit tau at k = 0."""
    if abs(k) < SERIES_THRESHOLD:
        return tau - k * tau**2
    return -math.expm1(-2.0 * k * tau) / (2.0 * k)


@dataclass(frozen=True)
class WeightSpec:
    """Path weight w over [r, t].

    kinds:
        constant:        exp(-factor * k * (t - r))
        functional:      exp(-factor * K[r, t]) for the path functional K
        half_difference: exp((upper[r, t] - lower[r, t]) / 2)
    """

    kind: str = "constant"
    k: float = 0.0
    factor: float = 1.0
    functional: PathFunctional | None = None
    lower: PathFunctional | None = None
    upper: PathFunctional | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "functional", "half_difference"):
            raise ValueError(f"Unknown weight kind '{self.kind}'")
        if self.kind == "functional" and self.functional is None:
            raise ValueError("Functional weights need a path functional")
        if self.kind == "half_difference" and (self.lower is None or self.upper is None):
            raise ValueError("Half-difference weights need lower and upper functionals")

    @property
    def functionals(self) -> tuple[PathFunctional, ...]:
        return tuple(f for f in (self.functional, self.lower, self.upper) if f is not None)

    def values(self, ensemble: PathEnsemble, j: int = -1, i: int | None = None) -> np.ndarray:
        """Weight per path over [tau_i, tau_j]; i None means the ensemble start."""
        if self.kind == "constant":
            span = ensemble.elapsed(j, i)
            return np.full(ensemble.n_included, math.exp(-self.factor * self.k * span))
        if self.kind == "functional":
            return np.exp(-self.factor * ensemble.functional(self.functional, j, i))
        diff = ensemble.functional(self.upper, j, i) - ensemble.functional(self.lower, j, i)
        return np.exp(0.5 * diff)


# -- statistics over a shared ensemble -----------------------------------------


def ptf_statistic(ensemble: PathEnsemble, f: ScalarField, j: int = -1) -> MeanStatistic:
    require_paths(ensemble.n_included)
    return MeanStatistic.from_samples(ensemble.values(f, j))


def bismut_samples(ensemble: PathEnsemble, f: ScalarField, j: int = -1) -> np.ndarray:
    """Q_{s, tau_j} //^{-1} grad f(X_{tau_j}) per path, in frame coordinates."""
    return np.einsum("nij,nj->ni", ensemble.q[:, j], ensemble.frame_gradients(f, j))


def bismut_statistic(ensemble: PathEnsemble, f: ScalarField, j: int = -1) -> MeanStatistic:
    require_paths(ensemble.n_included)
    return MeanStatistic.from_samples(bismut_samples(ensemble, f, j))


def start_gradient(ensemble: PathEnsemble, f: ScalarField) -> np.ndarray:
    """grad f(x) in the start frame."""
    u0 = initial_frame(ensemble.manifold, ensemble.x0, ensemble.metric, ensemble.start)
    return ensemble.manifold.frame_coordinates(u0, f.differential(ensemble.x0))


def nested_gradient_samples(ensemble: PathEnsemble, g: ScalarField, j: int) -> np.ndarray:
    """Single-sample estimate of grad P_{tau_j, T} g(X_{tau_j}) from the path suffix."""
    return np.einsum("nij,nj->ni", ensemble.suffix(j), ensemble.frame_gradients(g, -1))


# -- public estimators ---------------------------------------------------------


def _ensemble(
    manifold, drift, x, checkpoints, mc, metric, start, ensemble, **kwargs
) -> PathEnsemble:
    if ensemble is not None:
        return ensemble
    return simulate_ensemble(manifold, drift, x, checkpoints, mc, metric=metric, start=start, **kwargs)


def estimate_Ptf(
    manifold: ManifoldModel,
    drift: DriftField | None,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    mc: MonteCarloConfig,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> McEstimate:
    """P_{s,t} f(x) = E f(X_t) with X_s = x.

    Raises:
        TooFewPaths: fewer than 100 included paths
    """
    if t <= start:
        raise ValueError(f"t = {t} must exceed the start time {start}")
    ensemble = _ensemble(manifold, drift, x, [t], mc, metric, start, ensemble)
    j = ensemble.checkpoint(t)
    return McEstimate.from_statistic(ptf_statistic(ensemble, f, j), ensemble)


def estimate_grad_bismut(
    manifold: ManifoldModel,
    drift: DriftField | None,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    mc: MonteCarloConfig,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> McEstimate:
    """grad P_{s,t} f(x) = E[Q_{s,t} //^{-1} grad f(X_t)] in the frame at x."""
    if t <= start:
        raise ValueError(f"t = {t} must exceed the start time {start}")
    ensemble = _ensemble(manifold, drift, x, [t], mc, metric, start, ensemble)
    j = ensemble.checkpoint(t)
    return McEstimate.from_statistic(bismut_statistic(ensemble, f, j), ensemble)


def estimate_grad_fd(
    manifold: ManifoldModel,
    drift: DriftField | None,
    f: ScalarField,
    x: np.ndarray,
    t: float,
    mc: MonteCarloConfig,
    delta: float = 1e-2,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
) -> McEstimate:
    """Central differences of x -> P_{s,t} f(x) along the frame at x.

    The 2d perturbed ensembles share the seed, so path i sees the same
    increments from every starting point.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    x = manifold.check_point(x)
    drift = drift or ZeroDrift()
    u0 = initial_frame(manifold, x, metric, start)
    ensembles = []
    for i in range(manifold.dim):
        for sign in (1.0, -1.0):
            shifted = manifold.exp_map(x, sign * delta * u0[:, i])
            ensembles.append(
                simulate_ensemble(manifold, drift, shifted, [t], mc, metric=metric, start=start)
            )

    common = ensembles[0].path_indices
    for ens in ensembles[1:]:
        common = np.intersect1d(common, ens.path_indices)
    require_paths(len(common))

    components = []
    for i in range(manifold.dim):
        plus, minus = ensembles[2 * i], ensembles[2 * i + 1]
        f_plus = plus.values(f)[np.isin(plus.path_indices, common)]
        f_minus = minus.values(f)[np.isin(minus.path_indices, common)]
        components.append(MeanStatistic.from_samples((f_plus - f_minus) / (2.0 * delta)))
    reference = ensembles[0]
    estimate = McEstimate.from_statistic(stack(components), reference)
    estimate.n_excluded = mc.n_paths - len(common)
    estimate.checksum = reference.checksum
    return estimate


def estimate_weighted_pairing(
    manifold: ManifoldModel,
    drift: DriftField | None,
    f: ScalarField,
    g: ScalarField | None,
    x: np.ndarray,
    r: float,
    t: float,
    weight: WeightSpec,
    mc: MonteCarloConfig,
    nesting: int = 0,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
    ensemble: PathEnsemble | None = None,
) -> McEstimate:
    """E[w(path) <V(X_r), //_{r,t}^{-1} grad f(X_t)>].

    V is grad g(X_r) for nesting 0 and grad P_{r,t} g(X_r) for nesting 1, the
    inner gradient taken from the path suffix after r. With g None the scalar
    variant E[w(path) |grad f|^2(X_t)] is returned.

    Raises:
        NestedDepthExceeded: nesting above 1
    """
    if nesting not in (0, 1):
        raise NestedDepthExceeded(f"Only one level of nested gradients is supported, got {nesting}")
    if not start <= r <= t:
        raise ValueError(f"Need {start} <= r <= t, got r = {r}, t = {t}")
    checkpoints = sorted({r, t}) if r > start else [t]
    ensemble = _ensemble(
        manifold, drift, x, checkpoints, mc, metric, start, ensemble,
        functionals=weight.functionals, keep_suffix=nesting == 1,
    )
    jt = ensemble.checkpoint(t)
    jr = ensemble.checkpoint(r) if r > start else None
    w = weight.values(ensemble, jt, jr)
    c_t = ensemble.frame_gradients(f, jt)
    if g is None:
        samples = w * np.sum(c_t**2, axis=-1)
    else:
        if nesting == 1:
            if jr is None:
                raise ValueError("Nested pairings need r to be a recorded checkpoint after the start")
            v = nested_gradient_samples(ensemble, g, jr)
        elif jr is None:
            v = np.broadcast_to(start_gradient(ensemble, g), c_t.shape)
        else:
            v = ensemble.frame_gradients(g, jr)
        samples = w * np.sum(v * c_t, axis=-1)
    require_paths(ensemble.n_included)
    return McEstimate.from_statistic(MeanStatistic.from_samples(samples), ensemble)


def generator_defect(
    manifold: ManifoldModel,
    drift: DriftField | None,
    f: ScalarField,
    x: np.ndarray,
    steps,
    mc: MonteCarloConfig,
) -> list[McEstimate]:
    """E f(X_h) - f(x) - h Lf(x) after one step of size h, for every h in steps.

    Only meaningful on flat kinds, where L f = Delta f + <Z, grad f>.
    """
    if not manifold.flat:
        raise ValueError(f"Weak-order checks need a flat model space, got {manifold.kind}")
    drift = drift or ZeroDrift()
    x = manifold.check_point(x)
    lf = float(f.laplacian(x)) + float(np.dot(drift.value(x), f.gradient(x)))
    fx = float(f.value(x))
    out = []
    for h in steps:
        ensemble = simulate_ensemble(manifold, drift, x, [h], mc.with_overrides(step=h))
        stat = ptf_statistic(ensemble, f) - (fx + h * lf)
        out.append(McEstimate.from_statistic(stat, ensemble, step=h))
        logger.debug("Generator defect at h=%g: %.3e", h, float(stat.value))
    return out
