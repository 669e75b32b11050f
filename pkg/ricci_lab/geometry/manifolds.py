"""
Model manifolds with closed-form geometry oracles.

Points live in chart coordinates: Cartesian for the flat kinds, the Poincaré
ball for Hyperbolic and embedding coordinates in R^{d+1} for Sphere. Tangent
vectors and frames use the same coordinates, so a frame is an (n, d) array
where n is the chart dimension (d + 1 on the sphere, d otherwise).

Every oracle accepts a single point of shape (n,) or a batch of shape (N, n).
Metrics are conformal in the chosen charts, G(x) = gamma(x) * I, which keeps
frame arithmetic to a single scalar factor per point.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np

# Points closer than this (relative) to the boundary count as boundary points.
BOUNDARY_TOLERANCE = 1e-9


class PointOutsideChart(ValueError):
    pass


class OutsideInjectivityRadius(ValueError):
    pass


class NotABoundaryPoint(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryData:
    """Boundary geometry at a point of the boundary.

    Args:
        point: boundary point in chart coordinates
        normal: inward unit normal N
        second_fundamental_form: II as an endomorphism, zero on the normal line
        projector: rank-one projector onto span(N)
    """

    point: np.ndarray
    normal: np.ndarray
    second_fundamental_form: np.ndarray
    projector: np.ndarray


def _norm(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def _dot(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.sum(v * w, axis=-1)


def _as_frames(w: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    """View a vector (..., n) or a frame (..., n, k) as a frame."""
    w = np.asarray(w, dtype=float)
    if w.ndim >= 2 and w.shape[-2] == n and w.shape[-1] != n:
        return w, True
    if w.ndim >= 2 and w.shape[-2:] == (n, n):
        return w, True
    return w[..., None], False


class ManifoldModel(ABC):
    """Base class for the catalog of model spaces."""

    kind: str = ""
    has_boundary: bool = False
    flat: bool = False

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"Dimension must be >= 1, got {dim}")
        self.dim = int(dim)

    # -- chart --------------------------------------------------------------
    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def chart(self) -> str:
        return "cartesian"

    @property
    def injectivity_radius(self) -> float:
        return math.inf

    @property
    def step_scale(self) -> float:
        """Length scale that bounds the per-step displacement."""
        return self.injectivity_radius

    @property
    def ricci_constant(self) -> float:
        """Constant kappa with Ric = kappa * g."""
        return 0.0

    @abstractmethod
    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the chart domain (closure for boundaries)."""

    def check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise PointOutsideChart(
                f"{self.kind} expects {self.ambient_dim} chart coordinates, got shape {x.shape}"
            )
        if not np.all(self.contains(x)):
            raise PointOutsideChart(f"Point {x} lies outside the {self.kind} chart domain")
        return x

    def metric_scale(self, x: np.ndarray) -> np.ndarray:
        """gamma(x) with G(x) = gamma(x) * I."""
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1])

    def metric_at(self, x: np.ndarray) -> np.ndarray:
        """Metric matrix G(x) of shape (..., d, d)."""
        x = self.check_point(x)
        gamma = self.metric_scale(x)
        return gamma[..., None, None] * np.eye(self.dim)

    def christoffel_at(self, x: np.ndarray) -> np.ndarray:
        """Christoffel symbols Gamma[k, i, j] of shape (..., n, n, n)."""
        x = self.check_point(x)
        n = self.ambient_dim
        return np.zeros(x.shape[:-1] + (n, n, n))

    # -- vectors and frames -------------------------------------------------
    def tangent_project(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float)

    def inner(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.metric_scale(x) * _dot(v, w)

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sqrt(self.inner(x, v, v))

    def raise_index(self, x: np.ndarray, df: np.ndarray) -> np.ndarray:
        """Gradient vector from a differential (chart covector)."""
        return np.asarray(df, dtype=float) / self.metric_scale(x)[..., None]

    def orthonormal_frame(self, x: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """A G-orthonormal frame at x for the metric scale * G."""
        x = self.check_point(x)
        gamma = self.metric_scale(x) * scale
        return np.eye(self.dim) / np.sqrt(gamma)[..., None, None]

    def orthonormalize(self, x: np.ndarray, u: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Polar re-orthonormalization u <- u (u^T G u)^{-1/2}."""
        u = self.tangent_project_frame(x, u)
        gamma = self.metric_scale(x) * scale
        gram = gamma[..., None, None] * np.einsum("...ni,...nj->...ij", u, u)
        eigval, eigvec = np.linalg.eigh(gram)
        inv_sqrt = np.einsum("...ik,...k,...jk->...ij", eigvec, 1.0 / np.sqrt(eigval), eigvec)
        return u @ inv_sqrt

    def tangent_project_frame(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return u

    def frame_coordinates(self, u: np.ndarray, df: np.ndarray) -> np.ndarray:
        """Coordinates of the gradient of df in the orthonormal frame u."""
        return np.einsum("...nd,...n->...d", u, df)

    # -- geodesics ----------------------------------------------------------
    @abstractmethod
    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    def transport_along(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Parallel transport of w along s -> exp_map(x, s v), s in [0, 1]."""
        return np.asarray(w, dtype=float)

    def transport_geodesic(self, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Parallel transport of v in T_xM to T_yM along the minimizing geodesic."""
        return self.transport_along(x, self.log_map(x, y), v)

    def midpoint(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.exp_map(x, 0.5 * self.log_map(x, y))

    # -- curvature ----------------------------------------------------------
    def ricci_endo(self, x: np.ndarray) -> np.ndarray:
        """Ricci curvature as an endomorphism in an orthonormal tangent basis."""
        x = self.check_point(x)
        return self.ricci_constant * np.broadcast_to(
            np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)
        ).copy()

    # -- boundary -----------------------------------------------------------
    @property
    def boundary_curvature(self) -> float:
        """Umbilic constant sigma with II = sigma * id on the boundary."""
        return 0.0

    def distance_to_boundary(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], math.inf)

    def boundary_data(self, x: np.ndarray) -> BoundaryData:
        raise NotABoundaryPoint(f"{self.kind} has no boundary")

    def reflect(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project proposals back into the domain.

        Returns:
            (projected points, pushback distance, inward normal at contact or zero)
        """
        y = np.asarray(y, dtype=float)
        return y, np.zeros(y.shape[:-1]), np.zeros_like(y)

    # -- sampling and description -------------------------------------------
    @abstractmethod
    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Interior points used by curvature scans."""

    @abstractmethod
    def to_spec(self) -> dict[str, Any]: ...

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.to_spec().items() if k != "kind")
        return f"{type(self).__name__}({params})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ManifoldModel) and self.to_spec() == other.to_spec()

    def __hash__(self) -> int:
        return hash(repr(self))


class _FlatModel(ManifoldModel):
    flat = True

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) + np.asarray(v, dtype=float)

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) - np.asarray(x, dtype=float)

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return _norm(self.log_map(x, y))


class Euclidean(_FlatModel):
    """Flat R^d."""

    kind = "euclidean"

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(count, self.dim))

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim}


class FlatTorus(_FlatModel):
    """R^d modulo a rectangular lattice, charted on [0, L_1) x ... x [0, L_d)."""

    kind = "flat_torus"

    def __init__(self, dim: int, periods: tuple[float, ...] | float = 2 * math.pi):
        super().__init__(dim)
        periods = np.broadcast_to(np.asarray(periods, dtype=float), (dim,))
        if np.any(periods <= 0):
            raise ValueError(f"Torus periods must be positive, got {periods}")
        self.periods = periods.copy()

    @property
    def injectivity_radius(self) -> float:
        return float(np.min(self.periods)) / 2.0

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return np.mod(x, self.periods)

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.wrap(super().exp_map(x, v))

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        diff = diff - self.periods * np.round(diff / self.periods)
        if np.any(np.isclose(np.abs(diff), self.periods / 2.0, rtol=0.0, atol=1e-12)):
            raise OutsideInjectivityRadius("Points are on each other's cut locus")
        return diff

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(count, self.dim)) * self.periods

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "periods": [float(p) for p in self.periods]}


class EuclideanBall(_FlatModel):
    """Closed Euclidean ball of radius R centred at the origin."""

    kind = "euclidean_ball"
    has_boundary = True

    def __init__(self, dim: int, radius: float = 1.0):
        super().__init__(dim)
        if radius <= 0:
            raise ValueError(f"Ball radius must be positive, got {radius}")
        self.radius = float(radius)

    @property
    def step_scale(self) -> float:
        return self.radius

    @property
    def boundary_curvature(self) -> float:
        return 1.0 / self.radius

    def contains(self, x: np.ndarray) -> np.ndarray:
        return _norm(np.asarray(x, dtype=float)) <= self.radius * (1 + BOUNDARY_TOLERANCE)

    def distance_to_boundary(self, x: np.ndarray) -> np.ndarray:
        return self.radius - _norm(np.asarray(x, dtype=float))

    def boundary_data(self, x: np.ndarray) -> BoundaryData:
        x = self.check_point(x)
        r = float(_norm(x))
        if abs(r - self.radius) > BOUNDARY_TOLERANCE * max(1.0, self.radius):
            raise NotABoundaryPoint(f"|x| = {r} differs from the ball radius {self.radius}")
        normal = -x / r
        projector = np.outer(normal, normal)
        second = (np.eye(self.dim) - projector) / self.radius
        return BoundaryData(x, normal, second, projector)

    def reflect(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        r = _norm(y)
        outside = r > self.radius
        safe_r = np.where(outside, r, 1.0)
        projected = np.where(outside[..., None], y * (self.radius / safe_r)[..., None], y)
        push = np.where(outside, r - self.radius, 0.0)
        normal = np.where(outside[..., None], -projected / self.radius, 0.0)
        return projected, push, normal

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        direction = rng.standard_normal((count, self.dim))
        direction /= _norm(direction)[:, None]
        radius = 0.5 * self.radius * rng.uniform(size=count) ** (1.0 / self.dim)
        return direction * radius[:, None]

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius}


class HalfSpace(_FlatModel):
    """Upper half-space {x : x_d >= 0}; the last coordinate is the normal one."""

    kind = "half_space"
    has_boundary = True

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x[..., -1] >= -BOUNDARY_TOLERANCE) & np.all(np.isfinite(x), axis=-1)

    def distance_to_boundary(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., -1]

    def boundary_data(self, x: np.ndarray) -> BoundaryData:
        x = self.check_point(x)
        if abs(x[-1]) > BOUNDARY_TOLERANCE:
            raise NotABoundaryPoint(f"x_d = {x[-1]} is not on the boundary hyperplane")
        normal = np.zeros(self.dim)
        normal[-1] = 1.0
        return BoundaryData(x, normal, np.zeros((self.dim, self.dim)), np.outer(normal, normal))

    def reflect(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.array(y, dtype=float)
        push = np.maximum(-y[..., -1], 0.0)
        y[..., -1] = np.maximum(y[..., -1], 0.0)
        normal = np.zeros_like(y)
        normal[..., -1] = np.where(push > 0, 1.0, 0.0)
        return y, push, normal

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        points = rng.uniform(-1.0, 1.0, size=(count, self.dim))
        points[:, -1] = rng.uniform(1.0, 2.0, size=count)
        return points

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim}


class Sphere(ManifoldModel):
    """Round sphere of radius R in embedding coordinates of R^{d+1}."""

    kind = "sphere"
    chart_tolerance = 1e-8

    def __init__(self, dim: int, radius: float = 1.0):
        super().__init__(dim)
        if radius <= 0:
            raise ValueError(f"Sphere radius must be positive, got {radius}")
        self.radius = float(radius)

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def chart(self) -> str:
        return "embedding"

    @property
    def injectivity_radius(self) -> float:
        return math.pi * self.radius

    @property
    def ricci_constant(self) -> float:
        return (self.dim - 1) / self.radius**2

    def contains(self, x: np.ndarray) -> np.ndarray:
        r = _norm(np.asarray(x, dtype=float))
        return np.abs(r - self.radius) <= self.chart_tolerance * self.radius

    def tangent_basis(self, x: np.ndarray) -> np.ndarray:
        """Orthonormal basis of T_xS as an (n, d) array.

        Built from the Householder reflection that sends the last axis to x/R.
        """
        x = self.check_point(x)
        n = self.ambient_dim
        unit = x / self.radius
        pole = np.zeros(n)
        pole[-1] = 1.0
        w = pole - unit
        w_sq = _dot(w, w)
        safe = np.where(w_sq > 1e-24, w_sq, 1.0)
        householder = np.eye(n) - 2.0 * np.einsum("...i,...j->...ij", w, w) / safe[..., None, None]
        householder = np.where((w_sq > 1e-24)[..., None, None], householder, np.eye(n))
        return householder[..., :, : self.dim]

    def metric_at(self, x: np.ndarray) -> np.ndarray:
        basis = self.tangent_basis(x)
        return np.einsum("...ni,...nj->...ij", basis, basis)

    def christoffel_at(self, x: np.ndarray) -> np.ndarray:
        """Ambient form: geodesics solve x'' + Gamma(x', x') = 0 with Gamma^k_ij = x_k delta_ij / R^2."""
        x = self.check_point(x)
        n = self.ambient_dim
        return np.einsum("...k,ij->...kij", x, np.eye(n)) / self.radius**2

    def tangent_project(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - (_dot(v, x) / self.radius**2)[..., None] * x

    def tangent_project_frame(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        coef = np.einsum("...n,...nd->...d", x, u) / self.radius**2
        return u - x[..., :, None] * coef[..., None, :]

    def raise_index(self, x: np.ndarray, df: np.ndarray) -> np.ndarray:
        return self.tangent_project(x, df)

    def orthonormal_frame(self, x: np.ndarray, scale: float = 1.0) -> np.ndarray:
        return self.tangent_basis(x) / math.sqrt(scale)

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = self.tangent_project(x, v)
        speed = _norm(v)
        theta = speed / self.radius
        y = np.cos(theta)[..., None] * x + np.sinc(theta / math.pi)[..., None] * v
        return y * (self.radius / _norm(y))[..., None]

    def _angle(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        along = _dot(x, y) / self.radius**2
        w = y - along[..., None] * x
        theta = np.arctan2(_norm(w) / self.radius, along)
        return theta, w

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        theta, w = self._angle(x, y)
        if np.any(theta > math.pi - 1e-6):
            raise OutsideInjectivityRadius("Antipodal points have no unique geodesic")
        return w / np.sinc(theta / math.pi)[..., None]

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        theta, _ = self._angle(x, y)
        return self.radius * theta

    def transport_along(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = self.tangent_project(x, v)
        frames, is_frame = _as_frames(w, self.ambient_dim)
        speed = _norm(v)
        theta = speed / self.radius
        safe = np.where(speed > 0, speed, 1.0)
        e = np.where((speed > 0)[..., None], v / safe[..., None], 0.0)
        shift = (np.cos(theta) - 1.0)[..., None] * e - np.sin(theta)[..., None] * x / self.radius
        along = np.einsum("...n,...nk->...k", e, frames)
        moved = frames + shift[..., :, None] * along[..., None, :]
        return moved if is_frame else moved[..., 0]

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        points = rng.standard_normal((count, self.ambient_dim))
        return self.radius * points / _norm(points)[:, None]

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius}


def mobius_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Möbius addition on the unit Poincaré ball."""
    xy = _dot(x, y)
    x2 = _dot(x, x)
    y2 = _dot(y, y)
    num = (1 + 2 * xy + y2)[..., None] * x + (1 - x2)[..., None] * y
    return num / (1 + 2 * xy + x2 * y2)[..., None]


def gyration(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """gyr[u, v] w on the unit Poincaré ball, applied to the columns of a frame w."""
    uw = np.einsum("...n,...nk->...k", u, w)
    vw = np.einsum("...n,...nk->...k", v, w)
    uv = _dot(u, v)[..., None]
    u2 = _dot(u, u)[..., None]
    v2 = _dot(v, v)[..., None]
    a = -uw * v2 + vw + 2 * uv * vw
    b = -vw * u2 - uw
    d = 1 + 2 * uv + u2 * v2
    return w + 2 * (u[..., :, None] * a[..., None, :] + v[..., :, None] * b[..., None, :]) / d[
        ..., None, :
    ]


class Hyperbolic(ManifoldModel):
    """Hyperbolic space of curvature -1/a^2 in Poincaré-ball coordinates.

    The metric is g = a^2 lambda(x)^2 delta with lambda(x) = 2 / (1 - |x|^2).
    """

    kind = "hyperbolic"

    def __init__(self, dim: int, scale: float = 1.0):
        super().__init__(dim)
        if scale <= 0:
            raise ValueError(f"Hyperbolic scale must be positive, got {scale}")
        self.scale = float(scale)

    @property
    def chart(self) -> str:
        return "poincare_ball"

    @property
    def ricci_constant(self) -> float:
        return -(self.dim - 1) / self.scale**2

    def contains(self, x: np.ndarray) -> np.ndarray:
        return _dot(x, x) < 1.0

    @staticmethod
    def conformal(x: np.ndarray) -> np.ndarray:
        return 2.0 / (1.0 - _dot(x, x))

    def metric_scale(self, x: np.ndarray) -> np.ndarray:
        return (self.scale * self.conformal(np.asarray(x, dtype=float))) ** 2

    def christoffel_at(self, x: np.ndarray) -> np.ndarray:
        x = self.check_point(x)
        n = self.dim
        dphi = 2.0 * x / (1.0 - _dot(x, x))[..., None]
        eye = np.eye(n)
        return (
            np.einsum("ki,...j->...kij", eye, dphi)
            + np.einsum("kj,...i->...kij", eye, dphi)
            - np.einsum("ij,...k->...kij", eye, dphi)
        )

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        speed = _norm(v)
        lam = self.conformal(x)
        safe = np.where(speed > 0, speed, 1.0)
        coef = np.where(speed > 0, np.tanh(lam * speed / 2.0) / safe, lam / 2.0)
        return mobius_add(x, coef[..., None] * v)

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = mobius_add(-x, np.asarray(y, dtype=float))
        r = _norm(w)
        if np.any(r >= 1.0):
            raise OutsideInjectivityRadius("Point lies on the ideal boundary")
        safe = np.where(r > 1e-8, r, 1.0)
        coef = np.where(r > 1e-8, np.arctanh(r) / safe, 1.0 + r**2 / 3.0)
        return (2.0 / self.conformal(x))[..., None] * coef[..., None] * w

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r = _norm(mobius_add(-np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
        return 2.0 * self.scale * np.arctanh(np.minimum(r, 1.0 - 1e-16))

    def transport_along(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        frames, is_frame = _as_frames(w, self.ambient_dim)
        y = self.exp_map(x, v)
        ratio = self.conformal(x) / self.conformal(y)
        moved = ratio[..., None, None] * gyration(y, -x, frames)
        return moved if is_frame else moved[..., 0]

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        direction = rng.standard_normal((count, self.dim))
        direction /= _norm(direction)[:, None]
        radius = 0.5 * rng.uniform(size=count) ** (1.0 / self.dim)
        return direction * radius[:, None]

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "scale": self.scale}


MANIFOLD_KINDS: dict[str, type[ManifoldModel]] = {
    cls.kind: cls for cls in (Euclidean, Sphere, Hyperbolic, FlatTorus, EuclideanBall, HalfSpace)
}


def manifold_from_spec(spec: dict[str, Any]) -> ManifoldModel:
    """Build a model space from its config description."""
    kind = spec.get("kind")
    if kind not in MANIFOLD_KINDS:
        raise ValueError(f"Unknown manifold kind '{kind}'; expected one of {sorted(MANIFOLD_KINDS)}")
    dim = int(spec.get("dim", 2))
    if kind in ("sphere", "euclidean_ball"):
        return MANIFOLD_KINDS[kind](dim, radius=float(spec.get("radius", 1.0)))
    if kind == "hyperbolic":
        return Hyperbolic(dim, scale=float(spec.get("scale", 1.0)))
    if kind == "flat_torus":
        return FlatTorus(dim, periods=tuple(spec.get("periods") or [2 * math.pi]))
    return MANIFOLD_KINDS[kind](dim)
