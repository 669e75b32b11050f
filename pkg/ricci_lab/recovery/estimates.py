"""
Recovery estimates and the small-time extrapolation behind them.

Quotients are evaluated on a grid of times sharing one ensemble and fitted by
value = a + b * x (x = t for interior limits, sqrt(t) at the boundary). The fit
is linear in the quotients, so the intercept is itself a MeanStatistic whose
standard error keeps the correlation across grid points.
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ricci_lab.semigroup.statistics import MeanStatistic, linear_combination

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 3
UNIT_TOLERANCE = 1e-6
LOW_CONFIDENCE = "LOW_CONFIDENCE"
OK = "OK"


class GridTooCoarse(ValueError):
    pass


class NotUnitDirection(ValueError):
    pass


@dataclass
class LinearFit:
    intercept: MeanStatistic
    slope: MeanStatistic
    residual: float


def fit_line(abscissae, quotients: list[MeanStatistic]) -> LinearFit:
    """Least squares a + b x through the quotients.

    Raises:
        GridTooCoarse: fewer than three grid points
    """
    x = np.asarray(abscissae, dtype=float)
    if len(x) < MIN_GRID_POINTS or len(np.unique(x)) < MIN_GRID_POINTS:
        raise GridTooCoarse(f"Extrapolation needs at least {MIN_GRID_POINTS} distinct points, got {x}")
    design = np.column_stack([np.ones_like(x), x])
    weights = np.linalg.pinv(design)
    intercept = linear_combination(weights[0], quotients)
    slope = linear_combination(weights[1], quotients)
    values = np.array([float(q.value) for q in quotients])
    fitted = float(intercept.value) + float(slope.value) * x
    return LinearFit(intercept, slope, float(np.max(np.abs(values - fitted))))


def confidence_flag(value: float, residual: float, max_se: float) -> str:
    threshold = max(3.0 * max_se, 0.01 * max(1.0, abs(value)))
    return LOW_CONFIDENCE if residual > threshold else OK


@dataclass
class RecoveryEstimate:
    """Extrapolated curvature value with its fit diagnostics.

    Args:
        target: RicZ, II or EvolvingR
        method: quotient id, e.g. "i(p=2)" or "pairing-a"
        value: fitted intercept
        se: its standard error
        t_grid: times the quotients were evaluated at
        residual: largest absolute fit residual
        flag: OK or LOW_CONFIDENCE
        quotients: raw quotient value per grid time
        quotient_se: their standard errors
    """

    target: str
    method: str
    value: float
    se: float
    t_grid: list[float]
    residual: float
    flag: str
    quotients: list[float] = field(default_factory=list)
    quotient_se: list[float] = field(default_factory=list)
    slope: float = 0.0
    abscissa: str = "t"
    n_paths: int = 0
    n_excluded: int = 0
    checksum: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def low_confidence(self) -> bool:
        return self.flag == LOW_CONFIDENCE

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "method": self.method,
            "value": self.value,
            "se": self.se,
            "t_grid": list(self.t_grid),
            "residual": self.residual,
            "flag": self.flag,
            "quotients": list(self.quotients),
            "quotient_se": list(self.quotient_se),
            "slope": self.slope,
            "abscissa": self.abscissa,
            "n_paths": self.n_paths,
            "n_excluded": self.n_excluded,
            "checksum": self.checksum,
            "details": self.details,
        }


def build_estimate(
    target: str,
    method: str,
    t_grid,
    quotients: list[MeanStatistic],
    ensemble,
    abscissa: str = "t",
    intercept: MeanStatistic | None = None,
    residual: float | None = None,
    origin: float = 0.0,
    **details,
) -> RecoveryEstimate:
    """Fit the quotients (unless an intercept is supplied) and package the result."""
    taus = np.asarray(t_grid, dtype=float) - origin
    x = np.sqrt(taus) if abscissa == "sqrt_t" else taus
    fit = fit_line(x, quotients)
    if intercept is None:
        intercept, residual = fit.intercept, fit.residual
    value, se = float(intercept.value), float(intercept.se)
    max_se = max(float(q.se) for q in quotients)
    flag = confidence_flag(value, residual, max_se)
    if flag == LOW_CONFIDENCE:
        logger.warning(
            "%s recovery by %s: fit residual %.3g exceeds the noise level (max SE %.3g)",
            target, method, residual, max_se,
        )
    return RecoveryEstimate(
        target=target,
        method=method,
        value=value,
        se=se,
        t_grid=[float(t) for t in t_grid],
        residual=float(residual),
        flag=flag,
        quotients=[float(q.value) for q in quotients],
        quotient_se=[float(q.se) for q in quotients],
        slope=float(fit.slope.value),
        abscissa=abscissa,
        n_paths=ensemble.n_paths,
        n_excluded=ensemble.n_excluded,
        checksum=ensemble.checksum,
        details=details,
    )


def check_unit(norm: float, allow_unnormalized: bool) -> None:
    if not allow_unnormalized and abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NotUnitDirection(f"Direction must have unit length, got |X| = {norm:.6g}")


def check_grid(t_grid) -> None:
    if len(set(float(t) for t in t_grid)) < MIN_GRID_POINTS:
        raise GridTooCoarse(
            f"Extrapolation needs at least {MIN_GRID_POINTS} distinct grid times, got {list(t_grid)}"
        )
