"""
Damped parallel transport Q.

Q solves dQ = -Q (Ric^Z dt + II dl)(id - 1_{boundary} P) along a path, with all
endomorphisms expressed in the moving orthonormal frame, so Q lives in the
frame coordinates of the starting point. Each step applies the exponential
Euler factor expm(-h Ric^Z) with the curvature frozen at the step midpoint;
boundary contacts then apply exp(-dl II) followed by the tangential projection.
"""

import numpy as np
from scipy.linalg import expm

from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.manifolds import ManifoldModel


class IntervalOutsideGrid(ValueError):
    pass


class CurvatureOracle:
    """Frame-coordinate curvature endomorphisms for the Q equation.

    Static metrics use Ric^Z = Ric - nabla Z. Evolving metrics use
    R^Z_t = Ric_t - nabla^t Z - d_t g_t / 2.
    """

    def __init__(
        self,
        manifold: ManifoldModel,
        drift: DriftField | None = None,
        metric: EvolvingMetric | None = None,
    ):
        self.manifold = manifold
        self.drift = drift or ZeroDrift()
        self.metric = metric
        self.drift.check_compatible(manifold)
        self._cached_factor: tuple[float, np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def scalar_rate(self, t: float) -> float:
        if self.metric is None:
            return self.manifold.ricci_constant
        return float(self.metric.curvature_rate(t))

    def metric_scale(self, t: float) -> float:
        return 1.0 if self.metric is None else float(self.metric.scale(t))

    def frame_matrix(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        """Curvature endomorphism at x in the frame u, shape (..., d, d)."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.broadcast_to(self.scalar_rate(t) * np.eye(d), x.shape[:-1] + (d, d)).copy()
        if not self.drift.is_zero:
            gamma = self.metric_scale(t) * self.manifold.metric_scale(x)
            jac = self.drift.jacobian(x)
            out -= gamma[..., None, None] * np.einsum("...ni,...mn,...mj->...ij", u, jac, u)
        return out

    def lower_bound(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        """Smallest eigenvalue of the symmetric part of the frame matrix."""
        m = self.frame_matrix(x, u, t)
        return np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2)))[..., 0]

    def _interior_factor(
        self, x: np.ndarray, y: np.ndarray, u: np.ndarray, t: float, h: float
    ) -> np.ndarray:
        n = x.shape[0]
        d = self.dim
        t_mid = t + 0.5 * h
        if self.drift.is_zero:
            factor = np.exp(-h * self.scalar_rate(t_mid)) * np.eye(d)
            return np.broadcast_to(factor, (n, d, d))
        if self.manifold.flat and self.drift.constant_jacobian is not None:
            # flat frames never rotate, so one path's frame serves the batch
            if self.metric is None and self._cached_factor is not None and self._cached_factor[0] == h:
                return np.broadcast_to(self._cached_factor[1], (n, d, d))
            factor = expm(-h * self.frame_matrix(x[:1], u[:1], t_mid)[0])
            if self.metric is None:
                self._cached_factor = (h, factor)
            return np.broadcast_to(factor, (n, d, d))
        mid = 0.5 * (x + y) if self.manifold.flat else self.manifold.midpoint(x, y)
        return expm(-h * self.frame_matrix(mid, u, t_mid))

    def step_factor(
        self,
        x: np.ndarray,
        y: np.ndarray,
        u: np.ndarray,
        u_next: np.ndarray,
        t: float,
        h: float,
        push: np.ndarray | None = None,
        normal: np.ndarray | None = None,
        boundary: bool = True,
    ) -> np.ndarray:
        """Right factor F with Q_{s,t+h} = Q_{s,t} F for a batch of steps x -> y."""
        factor = self._interior_factor(x, y, u, t, h)
        if not boundary or push is None or not np.any(push > 0):
            return factor
        factor = np.array(factor)
        hit = push > 0
        gamma = self.metric_scale(t + h) * self.manifold.metric_scale(y[hit])
        n_frame = gamma[:, None] * np.einsum("knd,kn->kd", u_next[hit], normal[hit])
        n_frame /= np.linalg.norm(n_frame, axis=-1, keepdims=True)
        projector = np.eye(self.dim) - np.einsum("ki,kj->kij", n_frame, n_frame)
        damping = np.exp(-push[hit] * self.manifold.boundary_curvature)
        factor[hit] = factor[hit] @ (damping[:, None, None] * projector)
        return factor


def grid_index(times: np.ndarray, value: float, tolerance: float = 1e-9) -> int:
    """Index of value on a time grid; IntervalOutsideGrid when it is not a node."""
    times = np.asarray(times, dtype=float)
    scale = max(1.0, float(np.max(np.abs(times))))
    index = int(np.argmin(np.abs(times - value)))
    if abs(times[index] - value) > tolerance * scale:
        raise IntervalOutsideGrid(
            f"Time {value} is not a node of the grid [{times[0]}, {times[-1]}]"
        )
    return index


def evolve_Q(
    path,
    oracle: CurvatureOracle,
    interval: tuple[float, float] | None = None,
    boundary: bool = True,
) -> np.ndarray:
    """Q_{s,t} along a recorded PathSample, in the frame at time s.

    Args:
        path: full-resolution PathSample
        oracle: curvature oracle of the diffusion that produced the path
        interval: (s, t) on the path grid; defaults to the whole path
        boundary: apply the boundary factor on contact steps

    Raises:
        IntervalOutsideGrid: s or t is not a grid node, or s > t
    """
    times = path.times
    s, t = interval if interval is not None else (times[0], times[-1])
    i, j = grid_index(times, s), grid_index(times, t)
    if i > j:
        raise IntervalOutsideGrid(f"Interval start {s} is after its end {t}")
    q = np.eye(oracle.dim)
    for k in range(i, j):
        h = times[k + 1] - times[k]
        factor = oracle.step_factor(
            path.points[k : k + 1],
            path.points[k + 1 : k + 2],
            path.frames[k : k + 1],
            path.frames[k + 1 : k + 2],
            times[k],
            h,
            push=path.local_time_increments[k : k + 1],
            normal=path.normals[k : k + 1],
            boundary=boundary,
        )
        q = q @ factor[0]
    return q
