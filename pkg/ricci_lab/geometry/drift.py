"""
Drift fields Z for the generator L = Delta + Z.

Non-zero drifts are Euclidean vector fields: they are only defined on the flat,
non-periodic model spaces, where the covariant derivative is the chart Jacobian.
"""

from abc import ABC, abstractmethod
from collections.abc import Callable
from typing import Any

import numpy as np

from ricci_lab.geometry.manifolds import FlatTorus, ManifoldModel


class IncompatibleDrift(ValueError):
    pass


class DriftField(ABC):
    """Vector field Z with its covariant-derivative oracle."""

    kind: str = ""

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        """Z(x) in chart coordinates, same shape as x."""

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """nabla Z at x as a chart matrix J with nabla_X Z = J X."""

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def constant_jacobian(self) -> np.ndarray | None:
        """The Jacobian when it does not depend on x, else None."""
        return None

    def check_compatible(self, manifold: ManifoldModel) -> None:
        if self.is_zero:
            return
        if not manifold.flat or isinstance(manifold, FlatTorus):
            raise IncompatibleDrift(
                f"{self.kind} drift needs a flat non-periodic model space, got {manifold.kind}"
            )

    @abstractmethod
    def to_spec(self) -> dict[str, Any]: ...

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


class ZeroDrift(DriftField):
    kind = "zero"

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.zeros(x.shape[:-1] + (n, n))

    @property
    def is_zero(self) -> bool:
        return True

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind}


class LinearOU(DriftField):
    """Ornstein-Uhlenbeck drift Z(x) = -rate * (x - center)."""

    kind = "linear_ou"

    def __init__(self, rate: float, center: np.ndarray | None = None, dim: int | None = None):
        self.rate = float(rate)
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.dim = dim if dim is not None else (None if center is None else len(self.center))

    def _center(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[-1]) if self.center is None else self.center

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -self.rate * (x - self._center(x))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.broadcast_to(-self.rate * np.eye(n), x.shape[:-1] + (n, n)).copy()

    @property
    def constant_jacobian(self) -> np.ndarray | None:
        if self.dim is None:
            return None
        return -self.rate * np.eye(self.dim)

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"kind": self.kind, "rate": self.rate}
        if self.center is not None:
            spec["center"] = [float(c) for c in self.center]
        return spec


class GradPotential(DriftField):
    """Gradient drift Z = -grad V of the quadratic V(x) = (x - c)^T A (x - c) / 2.

    Ric^Z = Ric + Hess V = Ric + A on flat spaces. Other analytic potentials go
    through CustomDrift.
    """

    kind = "grad_potential"

    def __init__(self, hessian: np.ndarray, center: np.ndarray | None = None):
        a = np.asarray(hessian, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.allclose(a, a.T):
            raise ValueError("Potential Hessian must be a symmetric square matrix")
        self.hessian = a
        self.center = np.zeros(a.shape[0]) if center is None else np.asarray(center, dtype=float)

    def potential(self, x: np.ndarray) -> np.ndarray:
        diff = np.asarray(x, dtype=float) - self.center
        return 0.5 * np.einsum("...i,ij,...j->...", diff, self.hessian, diff)

    def value(self, x: np.ndarray) -> np.ndarray:
        return -(np.asarray(x, dtype=float) - self.center) @ self.hessian.T

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-self.hessian, x.shape[:-1] + self.hessian.shape).copy()

    @property
    def constant_jacobian(self) -> np.ndarray | None:
        return -self.hessian

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "hessian": self.hessian.tolist(), "center": self.center.tolist()}


class CustomDrift(DriftField):
    """Drift given by analytic component and Jacobian callables.

    Callables must be importable module-level functions when ensembles run on
    more than one worker.
    """

    kind = "custom"

    def __init__(
        self,
        field: Callable[[np.ndarray], np.ndarray],
        jacobian: Callable[[np.ndarray], np.ndarray],
        name: str = "custom",
    ):
        self._field = field
        self._jacobian = jacobian
        self.name = name

    def value(self, x: np.ndarray) -> np.ndarray:
        return self._field(np.asarray(x, dtype=float))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self._jacobian(np.asarray(x, dtype=float))

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "name": self.name}


def ricci_z_endo(manifold: ManifoldModel, drift: DriftField, x: np.ndarray) -> np.ndarray:
    """Ric^Z = Ric - nabla Z at x as an endomorphism in an orthonormal basis.

    The endomorphism acts by v -> Ric^Z(., v)^#, so the drift contributes -J^T.
    It is symmetric whenever nabla Z is.
    """
    x = manifold.check_point(x)
    drift.check_compatible(manifold)
    ricci = manifold.ricci_endo(x)
    if drift.is_zero:
        return ricci
    return ricci - np.swapaxes(drift.jacobian(x), -1, -2)


def drift_from_spec(spec: dict[str, Any] | None, dim: int) -> DriftField:
    """Build a drift from its config description."""
    spec = spec or {"kind": "zero"}
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZeroDrift()
    if kind == "linear_ou":
        center = spec.get("center")
        return LinearOU(float(spec.get("rate", 1.0)), center=center, dim=dim)
    if kind == "grad_potential":
        hessian = spec.get("hessian")
        if hessian is None:
            raise ValueError("grad_potential drift needs a 'hessian' matrix")
        return GradPotential(np.asarray(hessian, dtype=float), spec.get("center"))
    raise ValueError(f"Unknown drift kind '{kind}'")
