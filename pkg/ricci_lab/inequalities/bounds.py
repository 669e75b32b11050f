"""
Asserted curvature bounds and the path functionals they induce.

A bound pair K1 <= Ric^Z <= K2 (with sigma1 <= II <= sigma2 on a boundary)
enters the inequalities only through the functionals
K_i[s, t] = int_s^t K_i(r, X_r) dr + int_s^t sigma_i(X_r) dl_r.
"""

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.integrate import trapezoid

from ricci_lab.frame_sde.ensemble import ConstantRate, PathFunctional
from ricci_lab.frame_sde.paths import PathSample
from ricci_lab.frame_sde.transport import grid_index

logger = logging.getLogger(__name__)

FAMILIES = ("static", "boundary", "evolving")


class InvalidBounds(ValueError):
    pass


@dataclass(frozen=True)
class CurvatureBounds:
    """Lower and upper bounds fed to one theorem family.

    Constant bounds use k1, k2 (and sigma1, sigma2 for the boundary family).
    Function bounds pass path functionals as lower/upper; they take precedence.
    """

    family: str = "static"
    k1: float = 0.0
    k2: float = 0.0
    sigma1: float = 0.0
    sigma2: float = 0.0
    lower: PathFunctional | None = None
    upper: PathFunctional | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidBounds(f"Unknown theorem family '{self.family}'; expected one of {FAMILIES}")
        if self.k1 > self.k2:
            raise InvalidBounds(f"Lower bound k1 = {self.k1} exceeds upper bound k2 = {self.k2}")
        if self.sigma1 > self.sigma2:
            raise InvalidBounds(
                f"Lower boundary bound {self.sigma1} exceeds upper bound {self.sigma2}"
            )
        if self.family != "boundary" and (self.sigma1 or self.sigma2):
            raise InvalidBounds("Boundary bounds only apply to the boundary family")

    @property
    def lower_functional(self) -> PathFunctional:
        return self.lower or ConstantRate(self.k1, self.sigma1)

    @property
    def upper_functional(self) -> PathFunctional:
        return self.upper or ConstantRate(self.k2, self.sigma2)

    @property
    def functionals(self) -> tuple[PathFunctional, PathFunctional]:
        return self.lower_functional, self.upper_functional

    @property
    def constant_lower(self) -> float | None:
        """k1 when the lower functional is k1 (t - s) on every path."""
        constant = self.lower_functional.constant
        if constant is None or constant[1] != 0.0:
            return None
        return constant[0]

    @property
    def is_pinched(self) -> bool:
        """Strictly k1 < k2, as the sharp bound requires."""
        return self.lower is None and self.upper is None and self.k1 < self.k2

    def check_pointwise(self, points: np.ndarray, t: float = 0.0) -> None:
        """Verify K1 <= K2 (and sigma1 <= sigma2) wherever the bounds are evaluated."""
        lower, upper = self.functionals
        if np.any(lower.rate(t, points) > upper.rate(t, points)):
            raise InvalidBounds(f"K1 exceeds K2 at some of the {len(points)} evaluated points")
        if np.any(lower.boundary_rate(points) > upper.boundary_rate(points)):
            raise InvalidBounds("sigma1 exceeds sigma2 at some evaluated points")

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"family": self.family, "k1": self.k1, "k2": self.k2}
        if self.family == "boundary":
            spec.update(sigma1=self.sigma1, sigma2=self.sigma2)
        return spec


def accumulate_weight(
    path: PathSample,
    rate: PathFunctional | float,
    sigma: PathFunctional | float | None = None,
    interval: tuple[float, float] | None = None,
) -> float:
    """int_s^t K(r, X_r) dr + sum sigma(X_r) dl_r along a recorded path.

    The time integral is the trapezoid rule over the path nodes in [s, t].

    Raises:
        IntervalOutsideGrid: s or t is not a node of the path grid
    """
    if not isinstance(rate, PathFunctional):
        rate = ConstantRate(float(rate))
    times = path.times
    s, t = interval if interval is not None else (times[0], times[-1])
    i, j = grid_index(times, s), grid_index(times, t)
    if j <= i:
        return 0.0
    nodes = slice(i, j + 1)
    rates = np.array([float(rate.rate(tk, xk)) for tk, xk in zip(times[nodes], path.points[nodes], strict=True)])
    total = float(trapezoid(rates, times[nodes]))

    pushes = path.local_time_increments[i:j]
    if np.any(pushes > 0):
        if sigma is None:
            boundary = rate.boundary_rate(path.points[i + 1 : j + 1])
        elif isinstance(sigma, PathFunctional):
            boundary = sigma.boundary_rate(path.points[i + 1 : j + 1])
        else:
            boundary = np.full(j - i, float(sigma))
        total += float(np.sum(boundary * pushes))
    return total
