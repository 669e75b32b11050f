"""
Recovery of the second fundamental form II(X, X) at a boundary point.

The reflecting diffusion started on the boundary collects local time of order
2 sqrt(t / pi), so every quotient here is scaled by sqrt(pi / t) and fitted
against sqrt(t). The test function is Neumann (N f = 0 on the boundary) with
grad f(x) = X for X tangent to the boundary.
"""

import logging
import math

import numpy as np

from ricci_lab.frame_sde.ensemble import MonteCarloConfig, PathEnsemble, simulate_ensemble
from ricci_lab.geometry.drift import DriftField
from ricci_lab.geometry.functions import ScalarField, neumann_test_function
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.recovery.estimates import (
    RecoveryEstimate,
    build_estimate,
    check_grid,
    check_unit,
)
from ricci_lab.recovery.interior import recovery_config
from ricci_lab.semigroup.estimators import bismut_samples, start_gradient
from ricci_lab.semigroup.statistics import MeanStatistic, require_paths

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARY_T_GRID = (0.001, 0.004, 0.01)
BOUNDARY_METHODS = (
    "grad",
    "grad-semigroup",
    "pairing-a",
    "pairing-b",
    "variance",
    "variance-semigroup",
)
# Keeps f + offset > 0 on the region the paths visit
DEFAULT_OFFSET = 8.0
TANGENCY_TOLERANCE = 1e-9


def boundary_method_id(method: str, p: float) -> str:
    if method.startswith("pairing"):
        return method
    return f"{method}(p={p:g})"


def _check_p(method: str, p: float) -> None:
    if method.startswith("grad") and not p > 0:
        raise ValueError(f"p = {p} must be positive for method {method}")
    if method.startswith("variance") and not 1.0 <= p <= 2.0:
        raise ValueError(f"p = {p} is outside [1, 2] for method {method}")


def boundary_quotient(
    method: str,
    ensemble: PathEnsemble,
    f: ScalarField,
    j: int,
    t: float,
    p: float = 2.0,
) -> MeanStatistic:
    """The method's quotient at checkpoint j and time t; tends to II(X, X) as t -> 0."""
    root_t = math.sqrt(t)
    c = ensemble.frame_gradients(f, j)
    grad_sq = np.sum(c**2, axis=-1)
    a = start_gradient(ensemble, f)
    start_sq = float(a @ a)

    if method in ("grad", "grad-semigroup", "pairing-a", "pairing-b"):
        scale = math.sqrt(math.pi) / (2.0 * root_t)
        if method == "grad":
            moment = MeanStatistic.from_samples(grad_sq ** (p / 2.0))
            return (moment - start_sq ** (p / 2.0)) * (scale / p)
        g = MeanStatistic.from_samples(bismut_samples(ensemble, f, j))
        if method == "grad-semigroup":
            moment = MeanStatistic.from_samples(grad_sq ** (p / 2.0))
            return (moment - g.norm_sq().power(p / 2.0)) * (scale / p)
        m = MeanStatistic.from_samples(c)
        if method == "pairing-a":
            return (m.dot(a) - g.dot(a)) * scale
        return (g.dot(m) - g.norm_sq()) * scale

    if method not in ("variance", "variance-semigroup"):
        raise ValueError(f"Unknown boundary method '{method}'; expected one of {BOUNDARY_METHODS}")
    values = ensemble.values(f, j)
    if np.any(values <= 0):
        raise ValueError("Variance quotients need f > 0 along every path; raise the offset")
    squares = values**2
    second = MeanStatistic.from_samples(squares)
    if p == 1.0:
        entropy = MeanStatistic.from_samples(squares * np.log(squares))
        spread = (second.xlogx() - entropy) / (4.0 * t)
    else:
        moment = MeanStatistic.from_samples(values ** (2.0 / p))
        spread = (moment.power(p) - second) * (p / (4.0 * (p - 1.0) * t))
    if method == "variance":
        energy: MeanStatistic | float = start_sq
    else:
        energy = MeanStatistic.from_samples(bismut_samples(ensemble, f, j)).norm_sq()
    return (spread + energy) * (-0.375 * math.sqrt(math.pi / t))


def recover_II(
    manifold: ManifoldModel,
    drift: DriftField | None,
    x: np.ndarray,
    direction: np.ndarray,
    method: str,
    mc: MonteCarloConfig,
    t_grid=DEFAULT_BOUNDARY_T_GRID,
    p: float = 2.0,
    allow_unnormalized: bool = False,
    offset: float = DEFAULT_OFFSET,
    ensemble: PathEnsemble | None = None,
) -> RecoveryEstimate:
    """II(X, X) at a boundary point x from reflected paths started at x.

    Raises:
        NotABoundaryPoint: x is not on the boundary
        NotUnitDirection: |X| differs from 1 and allow_unnormalized is False
        GridTooCoarse: fewer than three grid times
        ValueError: X is not tangent to the boundary, or p is out of range
    """
    if method not in BOUNDARY_METHODS:
        raise ValueError(f"Unknown boundary method '{method}'; expected one of {BOUNDARY_METHODS}")
    _check_p(method, p)
    data = manifold.boundary_data(x)
    direction = np.asarray(direction, dtype=float)
    if abs(float(direction @ data.normal)) > TANGENCY_TOLERANCE:
        raise ValueError(f"Direction {direction} is not tangent to the boundary at {data.point}")
    check_unit(float(manifold.norm(data.point, direction)), allow_unnormalized)
    check_grid(t_grid)

    f = neumann_test_function(manifold, data.point, direction)
    if method.startswith("variance"):
        f = f + offset
    if ensemble is None:
        ensemble = simulate_ensemble(
            manifold, drift, data.point, sorted(t_grid), recovery_config(mc, t_grid), reflect=True
        )
    require_paths(ensemble.n_included)
    logger.info(
        "II recovery at %s by %s over %d paths (mean local time %.4g at t = %g)",
        data.point, method, ensemble.n_included, float(np.mean(ensemble.local_time[:, -1])),
        ensemble.horizon,
    )

    t_grid = sorted(float(t) for t in t_grid)
    quotients = [
        boundary_quotient(method, ensemble, f, ensemble.checkpoint(t), t, p) for t in t_grid
    ]
    return build_estimate(
        "II",
        boundary_method_id(method, p),
        t_grid,
        quotients,
        ensemble,
        abscissa="sqrt_t",
        oracle=manifold.boundary_curvature,
    )
