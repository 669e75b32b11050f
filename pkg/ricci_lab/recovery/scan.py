"""
Empirical pinch bracket: recover Ric^Z over sampled points and directions.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ricci_lab.frame_sde.ensemble import MonteCarloConfig, simulate_ensemble
from ricci_lab.geometry.drift import DriftField, ZeroDrift, ricci_z_endo
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.recovery.estimates import RecoveryEstimate, check_grid
from ricci_lab.recovery.interior import (
    DEFAULT_N_LADDER,
    DEFAULT_T_GRID,
    recover_ricci,
    recovery_config,
)

logger = logging.getLogger(__name__)

SCAN_COLUMNS = [
    "point",
    "direction",
    "method",
    "t",
    "quotient",
    "quotient_se",
    "intercept",
    "se",
    "residual",
    "flag",
    "oracle",
]


@dataclass
class PinchScan:
    """Bracket [inf, sup] of the recovered curvature and the per-cell table."""

    inf: RecoveryEstimate
    sup: RecoveryEstimate
    table: pd.DataFrame
    points: np.ndarray
    directions: np.ndarray

    @property
    def bracket(self) -> tuple[float, float]:
        return self.inf.value, self.sup.value


def scan_directions(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Unit coefficient vectors in an orthonormal frame.

    In dimension 2 the angles k pi / count cover the half circle evenly. Otherwise
    the basis vectors come first and seeded random unit vectors fill the rest.
    """
    if count < 1:
        raise ValueError(f"Need at least one direction, got {count}")
    if d == 2:
        angles = np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    basis = np.eye(d)[:count]
    extra = rng.standard_normal((max(0, count - d), d))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([basis, extra])


def pinch_scan(
    manifold: ManifoldModel,
    drift: DriftField | None,
    n_points: int,
    n_directions: int,
    method: str,
    mc: MonteCarloConfig,
    t_grid=DEFAULT_T_GRID,
    p: float = 2.0,
    n_ladder=DEFAULT_N_LADDER,
    seed: int | None = None,
) -> PinchScan:
    """Recover Ric^Z(X, X) on n_points x n_directions cells and bracket the results.

    Every direction at a point reuses that point's ensemble. Points and random
    directions come from a generator seeded with seed (default: the mc seed).
    """
    drift = drift or ZeroDrift()
    check_grid(t_grid)
    rng = np.random.default_rng(mc.seed if seed is None else seed)
    points = manifold.sample_points(rng, n_points)
    coefficients = scan_directions(manifold.dim, n_directions, rng)
    scan_mc = recovery_config(mc, t_grid)
    logger.info(
        "Pinch scan on %s: %d points x %d directions by %s", manifold.kind, n_points, n_directions, method
    )

    rows, estimates = [], []
    for i, x in enumerate(points):
        frame = manifold.orthonormal_frame(x)
        ensemble = simulate_ensemble(manifold, drift, x, sorted(t_grid), scan_mc)
        endo = ricci_z_endo(manifold, drift, x)
        for k, coeffs in enumerate(coefficients):
            estimate = recover_ricci(
                manifold, drift, x, frame @ coeffs, method, mc, t_grid, p, n_ladder, ensemble=ensemble
            )
            estimate.details.update(point=i, direction=k)
            estimates.append(estimate)
            oracle = float(coeffs @ endo @ coeffs)
            for t, q, q_se in zip(estimate.t_grid, estimate.quotients, estimate.quotient_se, strict=True):
                rows.append(
                    {
                        "point": i,
                        "direction": k,
                        "method": estimate.method,
                        "t": t,
                        "quotient": q,
                        "quotient_se": q_se,
                        "intercept": estimate.value,
                        "se": estimate.se,
                        "residual": estimate.residual,
                        "flag": estimate.flag,
                        "oracle": oracle,
                    }
                )

    values = np.array([e.value for e in estimates])
    low, high = estimates[int(np.argmin(values))], estimates[int(np.argmax(values))]
    flagged = sum(e.low_confidence for e in estimates)
    if flagged:
        logger.warning("%d of %d scan cells have low-confidence fits", flagged, len(estimates))
    logger.info("Pinch bracket [%.4g, %.4g]", low.value, high.value)
    return PinchScan(
        inf=low,
        sup=high,
        table=pd.DataFrame(rows, columns=SCAN_COLUMNS),
        points=points,
        directions=coefficients,
    )


def bracket_contains(scan: PinchScan, k1: float, k2: float, z: float = 3.0) -> bool:
    """Whether the asserted pinch [k1, k2] is compatible with the recovered bracket."""
    return bool(
        scan.inf.value + z * scan.inf.se >= k1 - math.ulp(k1)
        and scan.sup.value - z * scan.sup.se <= k2 + math.ulp(k2)
    )
