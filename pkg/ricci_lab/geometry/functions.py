"""
Scalar test functions with value, differential, gradient and Hessian oracles.

A field exposes its chart differential df. Gradients in an orthonormal frame u
are u^T df for every model space and every metric scale, which is how the
estimators consume them. Hessians are finite differences of the analytic
differential corrected by the Christoffel symbols; tests rely on them, the
simulation never does.
"""

import math
from typing import Any

import numpy as np

from ricci_lab.geometry.manifolds import (
    EuclideanBall,
    FlatTorus,
    HalfSpace,
    Hyperbolic,
    ManifoldModel,
    NotABoundaryPoint,
    Sphere,
    _dot,
    _norm,
)

HESSIAN_STEP = 1e-5
SMALL_ANGLE = 1e-4


class CutoffTooLarge(ValueError):
    pass


class ScalarField:
    """Base class for smooth functions on a model space."""

    def __init__(self, manifold: ManifoldModel):
        self.manifold = manifold

    def value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def differential(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.manifold.raise_index(y, self.differential(y))

    def frame_gradient(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.manifold.frame_coordinates(u, self.differential(y))

    def grad_norm_sq(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        grad = self.gradient(y)
        return self.manifold.inner(y, grad, grad)

    def hessian(self, y: np.ndarray, step: float = HESSIAN_STEP) -> np.ndarray:
        """Covariant Hessian as a chart bilinear form of shape (..., n, n)."""
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        offsets = step * np.eye(n)
        plus = self.differential(y[..., None, :] + offsets)
        minus = self.differential(y[..., None, :] - offsets)
        second = (plus - minus) / (2.0 * step)
        second = 0.5 * (second + np.swapaxes(second, -1, -2))
        gamma = self.manifold.christoffel_at(y)
        return second - np.einsum("...kij,...k->...ij", gamma, self.differential(y))

    def laplacian(self, y: np.ndarray) -> np.ndarray:
        """Laplace-Beltrami of the field, from the Hessian traced in an orthonormal frame."""
        y = np.asarray(y, dtype=float)
        frame = self.manifold.orthonormal_frame(y)
        return np.einsum("...ni,...nm,...mi->...", frame, self.hessian(y), frame)

    def __add__(self, shift: float) -> "ScalarField":
        return ShiftedField(self, float(shift))

    __radd__ = __add__

    def __mul__(self, factor: float) -> "ScalarField":
        return ScaledField(self, float(factor))

    __rmul__ = __mul__

    def describe(self) -> dict[str, Any]:
        return {"kind": type(self).__name__}


class ConstantFunction(ScalarField):
    def __init__(self, manifold: ManifoldModel, constant: float):
        super().__init__(manifold)
        self.constant = float(constant)

    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], self.constant)

    def differential(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(y, dtype=float))

    def describe(self) -> dict[str, Any]:
        return {"kind": "constant", "value": self.constant}


class CoordinateFunction(ScalarField):
    """f(y) = y_i in chart coordinates."""

    def __init__(self, manifold: ManifoldModel, index: int = 0):
        super().__init__(manifold)
        if not 0 <= index < manifold.ambient_dim:
            raise ValueError(f"Coordinate index {index} out of range")
        self.index = index

    def value(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float)[..., self.index]

    def differential(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        df = np.zeros_like(y)
        df[..., self.index] = 1.0
        return df

    def describe(self) -> dict[str, Any]:
        return {"kind": "coordinate", "index": self.index}


class SineFunction(ScalarField):
    """f(y) = amplitude * sin(frequency * y_i + phase)."""

    def __init__(
        self,
        manifold: ManifoldModel,
        index: int = 0,
        frequency: float = 1.0,
        phase: float = 0.0,
        amplitude: float = 1.0,
    ):
        super().__init__(manifold)
        self.index = index
        self.frequency = float(frequency)
        self.phase = float(phase)
        self.amplitude = float(amplitude)

    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.amplitude * np.sin(self.frequency * y[..., self.index] + self.phase)

    def differential(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        df = np.zeros_like(y)
        df[..., self.index] = (
            self.amplitude
            * self.frequency
            * np.cos(self.frequency * y[..., self.index] + self.phase)
        )
        return df

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "sine",
            "index": self.index,
            "frequency": self.frequency,
            "phase": self.phase,
            "amplitude": self.amplitude,
        }


class QuadraticFunction(ScalarField):
    """f(y) = y^T A y / 2 + b.y + c on a flat chart."""

    def __init__(self, manifold: ManifoldModel, a: np.ndarray, b: np.ndarray, c: float = 0.0):
        super().__init__(manifold)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = float(c)

    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.a, y) + y @ self.b + self.c

    def differential(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y @ (0.5 * (self.a + self.a.T)).T + self.b

    def describe(self) -> dict[str, Any]:
        return {"kind": "quadratic", "a": self.a.tolist(), "b": self.b.tolist(), "c": self.c}


class ShiftedField(ScalarField):
    """f_n = n + f."""

    def __init__(self, base: ScalarField, shift: float):
        super().__init__(base.manifold)
        self.base = base
        self.shift = shift

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.shift + self.base.value(y)

    def differential(self, y: np.ndarray) -> np.ndarray:
        return self.base.differential(y)

    def describe(self) -> dict[str, Any]:
        return {"kind": "shifted", "shift": self.shift, "base": self.base.describe()}


class ScaledField(ScalarField):
    def __init__(self, base: ScalarField, factor: float):
        super().__init__(base.manifold)
        self.base = base
        self.factor = factor

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.factor * self.base.value(y)

    def differential(self, y: np.ndarray) -> np.ndarray:
        return self.factor * self.base.differential(y)

    def describe(self) -> dict[str, Any]:
        return {"kind": "scaled", "factor": self.factor, "base": self.base.describe()}


def quintic_cutoff(rho: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """C^2 bump: 1 on [0, radius/2], 0 beyond radius, quintic smoothstep between.

    Returns:
        (chi(rho), chi'(rho))
    """
    rho = np.asarray(rho, dtype=float)
    if not math.isfinite(radius):
        return np.ones_like(rho), np.zeros_like(rho)
    half = radius / 2.0
    s = np.clip((rho - half) / half, 0.0, 1.0)
    chi = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    dchi = -30.0 * s**2 * (1.0 - s) ** 2 / half
    return chi, dchi


class PinnedTestFunction(ScalarField):
    """f(y) = <X, log_x(y)>_g times a cutoff in rho(x, y).

    The gradient at x is X and the Hessian at x vanishes, since the uncut part
    is linear in normal coordinates at x and the cutoff is flat near x.
    """

    def __init__(self, manifold: ManifoldModel, x: np.ndarray, direction: np.ndarray, cutoff: float):
        super().__init__(manifold)
        self.x = manifold.check_point(x)
        self.direction = manifold.tangent_project(self.x, np.asarray(direction, dtype=float))
        self.cutoff = float(cutoff)
        if isinstance(manifold, Sphere):
            self._x_hat = self.x / manifold.radius
        if isinstance(manifold, Hyperbolic):
            lam = float(manifold.conformal(self.x))
            self._weighted = 2.0 * manifold.scale**2 * lam * self.direction

    # uncut part and distance, each with its chart differential
    def _core(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m = self.manifold
        if isinstance(m, Sphere):
            return self._sphere_core(y)
        if isinstance(m, Hyperbolic):
            return self._hyperbolic_core(y)
        diff = m.log_map(self.x, y) if isinstance(m, FlatTorus) else y - self.x
        rho = _norm(diff)
        safe = np.where(rho > 0, rho, 1.0)
        drho = np.where((rho > 0)[..., None], diff / safe[..., None], 0.0)
        value = diff @ self.direction
        return value, np.broadcast_to(self.direction, y.shape).copy(), rho, drho

    def _sphere_core(self, y: np.ndarray):
        radius = self.manifold.radius
        norm_y = _norm(y)
        y_hat = y / norm_y[..., None]
        cos_t = y_hat @ self._x_hat
        perp = self._x_hat - cos_t[..., None] * y_hat
        theta = np.arctan2(_norm(perp), cos_t)
        small = theta < SMALL_ANGLE
        sin_t = np.sin(theta)
        safe_sin = np.where(small, 1.0, sin_t)
        ratio = np.where(small, 1.0 + theta**2 / 6.0, theta / safe_sin)
        curve = np.where(
            small,
            1.0 / 3.0 + 2.0 * theta**2 / 15.0,
            (sin_t - theta * cos_t) / safe_sin**3,
        )
        along = y @ self.direction
        value = ratio * along
        # d theta = -(x_hat - cos theta y_hat) / (|y| sin theta)
        dvalue = ratio[..., None] * self.direction - (along * curve / norm_y)[..., None] * perp
        rho = radius * theta
        drho = np.where(
            small[..., None], 0.0, -(radius / (norm_y * safe_sin))[..., None] * perp
        )
        return value, dvalue, rho, drho

    def _hyperbolic_core(self, y: np.ndarray):
        m = self.manifold
        u = -self.x
        u2 = float(u @ u)
        uy = y @ u
        y2 = _dot(y, y)
        denom = 1.0 + 2.0 * uy + u2 * y2
        numer = (1.0 + 2.0 * uy + y2)[..., None] * u + (1.0 - u2) * y
        z = numer / denom[..., None]
        # Jacobian of y -> (-x) (+) y, transposed for covector pullback
        dnumer = (
            np.einsum("i,...j->...ij", u, 2.0 * u + 2.0 * y) + (1.0 - u2) * np.eye(m.dim)
        )
        ddenom = 2.0 * u + 2.0 * u2 * y
        jac = (dnumer - np.einsum("...i,...j->...ij", z, ddenom)) / denom[..., None, None]
        r = _norm(z)
        small = r < SMALL_ANGLE
        safe_r = np.where(small, 1.0, r)
        ratio = np.where(small, 1.0 + r**2 / 3.0, np.arctanh(safe_r) / safe_r)
        slope = np.where(
            small,
            2.0 / 3.0 + 4.0 * r**2 / 5.0,
            (safe_r / (1.0 - safe_r**2) - np.arctanh(safe_r)) / safe_r**3,
        )
        along = z @ self._weighted
        value = ratio * along
        dz = ratio[..., None] * self._weighted + (along * slope)[..., None] * z
        dvalue = np.einsum("...ij,...i->...j", jac, dz)
        rho = 2.0 * m.scale * np.arctanh(np.minimum(r, 1.0 - 1e-16))
        dr = np.einsum("...ij,...i->...j", jac, z / safe_r[..., None])
        drho = np.where(small[..., None], 0.0, (2.0 * m.scale / (1.0 - r**2))[..., None] * dr)
        return value, dvalue, rho, drho

    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        core, _, rho, _ = self._core(y)
        chi, _ = quintic_cutoff(rho, self.cutoff)
        return core * chi

    def differential(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        core, dcore, rho, drho = self._core(y)
        chi, dchi = quintic_cutoff(rho, self.cutoff)
        return chi[..., None] * dcore + (core * dchi)[..., None] * drho

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "pinned",
            "x": self.x.tolist(),
            "direction": self.direction.tolist(),
            "cutoff": self.cutoff,
        }


class NeumannTestFunction(ScalarField):
    """Test function with vanishing normal derivative on the boundary.

    HalfSpace: f(y) = <X, y - x> for X tangent to the boundary, with an optional
    cutoff in the tangential coordinates only.
    EuclideanBall: f(y) = k |X| (1 - |y|^2 / (3 R^2)) <y, X/|X|>, whose radial
    derivative vanishes on |y| = R; k is chosen so that grad f(x) = X for X
    orthogonal to x.
    """

    def __init__(
        self,
        manifold: ManifoldModel,
        x: np.ndarray,
        direction: np.ndarray,
        cutoff: float = math.inf,
    ):
        super().__init__(manifold)
        if not manifold.has_boundary:
            raise NotABoundaryPoint(f"{manifold.kind} has no boundary to be Neumann against")
        self.x = manifold.check_point(x)
        self.direction = np.asarray(direction, dtype=float)
        self.cutoff = float(cutoff)
        if isinstance(manifold, HalfSpace):
            if abs(self.direction[-1]) > 1e-12:
                raise ValueError("Neumann direction on a half-space must have zero normal component")
        elif isinstance(manifold, EuclideanBall):
            norm_x = float(np.linalg.norm(self.x))
            if norm_x > 0 and abs(self.x @ self.direction) > 1e-12 * norm_x:
                raise ValueError("Neumann direction in the ball must be orthogonal to the base point")
            self._speed = float(np.linalg.norm(self.direction))
            self._unit = self.direction / self._speed if self._speed > 0 else self.direction
            self._gain = 1.0 / (1.0 - norm_x**2 / (3.0 * manifold.radius**2))

    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if isinstance(self.manifold, HalfSpace):
            tangential = (y - self.x)[..., :-1]
            chi, _ = quintic_cutoff(_norm(tangential), self.cutoff)
            return chi * (tangential @ self.direction[:-1])
        radius = self.manifold.radius
        shape = 1.0 - _dot(y, y) / (3.0 * radius**2)
        return self._gain * self._speed * shape * (y @ self._unit)

    def differential(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if isinstance(self.manifold, HalfSpace):
            tangential = (y - self.x)[..., :-1]
            rho = _norm(tangential)
            chi, dchi = quintic_cutoff(rho, self.cutoff)
            core = tangential @ self.direction[:-1]
            safe = np.where(rho > 0, rho, 1.0)
            df = np.zeros_like(y)
            df[..., :-1] = chi[..., None] * self.direction[:-1] + (core * dchi / safe)[
                ..., None
            ] * tangential
            return df
        radius = self.manifold.radius
        shape = 1.0 - _dot(y, y) / (3.0 * radius**2)
        along = y @ self._unit
        return (self._gain * self._speed) * (
            shape[..., None] * self._unit - (2.0 * along / (3.0 * radius**2))[..., None] * y
        )

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "neumann",
            "x": self.x.tolist(),
            "direction": self.direction.tolist(),
            "cutoff": self.cutoff,
        }


def default_cutoff(manifold: ManifoldModel, x: np.ndarray) -> float:
    """Largest convenient cutoff: min(2, 0.9 inj, 0.9 dist to boundary)."""
    limit = min(2.0, 0.9 * manifold.injectivity_radius)
    if manifold.has_boundary:
        limit = min(limit, 0.9 * float(manifold.distance_to_boundary(x)))
    return limit


def pinned_test_function(
    manifold: ManifoldModel,
    x: np.ndarray,
    direction: np.ndarray,
    cutoff: float | None = None,
) -> PinnedTestFunction:
    """Build f with grad f(x) = X and Hess f(x) = 0, supported in B(x, cutoff).

    Raises:
        CutoffTooLarge: cutoff reaches the injectivity radius or the boundary
        ValueError: X is zero
    """
    x = manifold.check_point(x)
    direction = np.asarray(direction, dtype=float)
    if np.linalg.norm(manifold.tangent_project(x, direction)) == 0:
        raise ValueError("Pinned direction must be a non-zero tangent vector")
    if cutoff is None:
        cutoff = default_cutoff(manifold, x)
    if cutoff <= 0:
        raise CutoffTooLarge(f"No room for a cutoff at {x}: distance to the boundary is zero")
    if cutoff >= manifold.injectivity_radius:
        raise CutoffTooLarge(
            f"Cutoff {cutoff} reaches the injectivity radius {manifold.injectivity_radius}"
        )
    if manifold.has_boundary and cutoff >= float(manifold.distance_to_boundary(x)):
        raise CutoffTooLarge(
            f"Cutoff {cutoff} reaches the boundary at distance {manifold.distance_to_boundary(x)}"
        )
    return PinnedTestFunction(manifold, x, direction, cutoff)


def neumann_test_function(
    manifold: ManifoldModel,
    x: np.ndarray,
    direction: np.ndarray,
    cutoff: float = math.inf,
) -> NeumannTestFunction:
    """Build f with N f = 0 on the boundary and grad f(x) = X."""
    return NeumannTestFunction(manifold, x, direction, cutoff)
