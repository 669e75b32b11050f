"""
Evolving metrics g_t = c(t) g_base on a fixed model space.

The scale family is affine, c(t) = c0 + rate * t, which covers the Ricci-flow
solutions of the round sphere and static metrics (rate = 0). Its horizon T_c
is where c reaches zero, or infinity for non-negative rates.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.manifolds import ManifoldModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvolvingMetric:
    """Scale family c(t) over a base model space.

    Args:
        base: the model space carrying g_base
        initial_scale: c(0) > 0
        rate: dc/dt
    """

    base: ManifoldModel
    initial_scale: float = 1.0
    rate: float = 0.0

    def __post_init__(self):
        if self.initial_scale <= 0:
            raise ValueError(f"Initial scale must be positive, got {self.initial_scale}")

    @classmethod
    def static(cls, base: ManifoldModel) -> "EvolvingMetric":
        return cls(base, 1.0, 0.0)

    @classmethod
    def ricci_flow(cls, base: ManifoldModel) -> "EvolvingMetric":
        """Flow 1/2 d_t g = Ric of an Einstein model with Ric = kappa g: c(t) = 1 + 2 kappa t.

        The evolving curvature rate vanishes identically. Spheres expand; hyperbolic
        space shrinks to a point at t = 1 / 2.
        """
        return cls(base, 1.0, 2.0 * base.ricci_constant)

    @property
    def horizon(self) -> float:
        """T_c: first time c vanishes."""
        if self.rate >= 0:
            return math.inf
        return self.initial_scale / -self.rate

    @property
    def is_static(self) -> bool:
        return self.rate == 0.0 and self.initial_scale == 1.0

    def scale(self, t: float | np.ndarray) -> float | np.ndarray:
        return self.initial_scale + self.rate * np.asarray(t, dtype=float)

    def scale_rate(self, t: float | np.ndarray) -> float | np.ndarray:
        return self.rate + 0.0 * np.asarray(t, dtype=float)

    def metric_at(self, t: float, x: np.ndarray) -> np.ndarray:
        return float(self.scale(t)) * self.base.metric_at(x)

    def metric_derivative(self, t: float, x: np.ndarray) -> np.ndarray:
        """d/dt g_t = c'(t) g_base, exactly."""
        return float(self.scale_rate(t)) * self.base.metric_at(x)

    def distance(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.sqrt(float(self.scale(t))) * self.base.distance(x, y)

    def curvature_rate(self, t: float | np.ndarray, drift: DriftField | None = None) -> np.ndarray:
        """Scalar part of R^Z_t = Ric_t - 1/2 d_t g_t as an endomorphism of (T M, g_t).

        Ric is scale invariant as a bilinear form, so its endomorphism is kappa / c;
        d_t g_t = (c'/c) g_t. Drift contributions are added by the curvature oracle.
        """
        c = self.scale(t)
        return (self.base.ricci_constant - 0.5 * self.scale_rate(t)) / c

    def check_conditions(self, horizon: float, drift: DriftField | None = None) -> list[str]:
        """Sanity checks mirroring the integrability conditions; returns warnings.

        The lower curvature bound on [0, horizon] and positivity of c are logged,
        never enforced.
        """
        drift = drift or ZeroDrift()
        warnings = []
        if horizon >= self.horizon:
            warnings.append(f"Horizon {horizon} reaches the metric blow-up time {self.horizon}")
        end = min(horizon, self.horizon * (1 - 1e-9)) if math.isfinite(self.horizon) else horizon
        rates = self.curvature_rate(np.array([0.0, end]))
        if not np.all(np.isfinite(rates)):
            warnings.append("Curvature of the evolving metric is unbounded on the horizon")
        if not drift.is_zero and drift.constant_jacobian is None:
            warnings.append("Drift Jacobian is not constant; lower curvature bound not verified")
        for message in warnings:
            logger.warning(message)
        return warnings

    def to_spec(self) -> dict[str, Any]:
        return {"initial_scale": self.initial_scale, "rate": self.rate}
