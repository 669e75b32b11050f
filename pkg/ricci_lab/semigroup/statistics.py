"""
Linearised sample means.

Every quantity the estimators report is a smooth function of sample means over
one ensemble. A MeanStatistic carries the value together with its per-path
influence values, so arithmetic propagates the delta-method standard error and
keeps the correlation between terms that share common random numbers.
"""

from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

MIN_PATHS = 100

Operand = Union["MeanStatistic", float, np.ndarray]


class TooFewPaths(ValueError):
    pass


def require_paths(n: int, minimum: int = MIN_PATHS) -> None:
    if n < minimum:
        raise TooFewPaths(f"Need at least {minimum} included paths, got {n}")


@dataclass(frozen=True)
class MeanStatistic:
    """A value with influence values psi of shape (n, *value.shape).

    The standard error is sqrt(sum psi^2 / (n (n - 1))).
    """

    value: np.ndarray
    influence: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MeanStatistic":
        samples = np.asarray(samples, dtype=float)
        mean = samples.mean(axis=0)
        return cls(mean, samples - mean)

    @classmethod
    def constant(cls, value, n: int) -> "MeanStatistic":
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros((n,) + value.shape))

    @property
    def n(self) -> int:
        return self.influence.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.value)

    @property
    def se(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(self.shape)
        return np.sqrt(np.sum(self.influence**2, axis=0) / (self.n * (self.n - 1)))

    def _lift(self, other: Operand) -> "MeanStatistic":
        if isinstance(other, MeanStatistic):
            if other.n != self.n:
                raise ValueError(f"Statistics over {self.n} and {other.n} paths do not combine")
            return other
        return MeanStatistic.constant(other, self.n)

    def _padded(self, ndim: int) -> np.ndarray:
        extra = ndim - len(self.shape)
        return self.influence.reshape((self.n,) + (1,) * extra + self.shape)

    def _binary(self, other: Operand, value, d_self, d_other) -> "MeanStatistic":
        other = self._lift(other)
        value = np.asarray(value, dtype=float)
        k = value.ndim
        influence = d_self * self._padded(k) + d_other * other._padded(k)
        return MeanStatistic(value, np.broadcast_to(influence, (self.n,) + value.shape).copy())

    def __add__(self, other: Operand) -> "MeanStatistic":
        other = self._lift(other)
        return self._binary(other, self.value + other.value, 1.0, 1.0)

    __radd__ = __add__

    def __neg__(self) -> "MeanStatistic":
        return MeanStatistic(-self.value, -self.influence)

    def __sub__(self, other: Operand) -> "MeanStatistic":
        return self + (-self._lift(other))

    def __rsub__(self, other: Operand) -> "MeanStatistic":
        return (-self) + other

    def __mul__(self, other: Operand) -> "MeanStatistic":
        other = self._lift(other)
        return self._binary(other, self.value * other.value, other.value, self.value)

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "MeanStatistic":
        other = self._lift(other)
        return self * other.reciprocal()

    def __rtruediv__(self, other: Operand) -> "MeanStatistic":
        return self._lift(other) * self.reciprocal()

    def reciprocal(self) -> "MeanStatistic":
        return self.apply(1.0 / self.value, -1.0 / self.value**2)

    def apply(self, value, derivative) -> "MeanStatistic":
        """g(self) given g(value) and g'(value), elementwise."""
        value = np.asarray(value, dtype=float)
        return MeanStatistic(value, self.influence * np.asarray(derivative, dtype=float))

    def exp(self) -> "MeanStatistic":
        e = np.exp(self.value)
        return self.apply(e, e)

    def log(self) -> "MeanStatistic":
        return self.apply(np.log(self.value), 1.0 / self.value)

    def power(self, p: float) -> "MeanStatistic":
        return self.apply(self.value**p, p * self.value ** (p - 1.0))

    def xlogx(self) -> "MeanStatistic":
        """v log v."""
        return self.apply(self.value * np.log(self.value), np.log(self.value) + 1.0)

    def minimum_zero(self) -> "MeanStatistic":
        """min(v, 0); the influence is dropped where the clamp is active."""
        negative = self.value < 0
        return MeanStatistic(np.minimum(self.value, 0.0), self.influence * negative)

    def dot(self, other: Operand) -> "MeanStatistic":
        """Inner product over the last axis."""
        return (self * other).sum()

    def norm_sq(self) -> "MeanStatistic":
        return self.dot(self)

    def sum(self) -> "MeanStatistic":
        return MeanStatistic(np.sum(self.value, axis=-1), np.sum(self.influence, axis=-1))

    def __getitem__(self, index) -> "MeanStatistic":
        return MeanStatistic(np.asarray(self.value)[index], self.influence[(slice(None),) + np.index_exp[index]])


def linear_combination(coefficients, statistics: list[MeanStatistic]) -> MeanStatistic:
    total = statistics[0] * float(coefficients[0])
    for c, stat in zip(coefficients[1:], statistics[1:], strict=True):
        total = total + stat * float(c)
    return total


def stack(statistics: list[MeanStatistic]) -> MeanStatistic:
    """Stack scalar statistics into a vector statistic."""
    return MeanStatistic(
        np.array([s.value for s in statistics], dtype=float),
        np.stack([s.influence for s in statistics], axis=-1),
    )


@dataclass
class McEstimate:
    """Reported Monte-Carlo estimate.

    Args:
        value: scalar or d-vector
        se: standard error, same shape as value
        n_paths: simulated paths
        n_excluded: paths dropped by the lifetime guard
        checksum: digest of the Brownian increments consumed
        flagged: excluded fraction above the configured tolerance
    """

    value: Any
    se: Any
    n_paths: int
    n_excluded: int = 0
    checksum: str = ""
    flagged: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_statistic(cls, stat: MeanStatistic, ensemble, **extra) -> "McEstimate":
        value, se = np.asarray(stat.value), np.asarray(stat.se)
        return cls(
            value=float(value) if value.ndim == 0 else value.copy(),
            se=float(se) if se.ndim == 0 else se.copy(),
            n_paths=ensemble.n_paths,
            n_excluded=ensemble.n_excluded,
            checksum=ensemble.checksum,
            flagged=ensemble.flagged,
            extra=extra,
        )

    def to_dict(self) -> dict[str, Any]:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "value": plain(self.value),
            "se": plain(self.se),
            "n_paths": self.n_paths,
            "n_excluded": self.n_excluded,
            "checksum": self.checksum,
            "flagged": self.flagged,
        }
