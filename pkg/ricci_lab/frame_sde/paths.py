"""
Geodesic Euler-Maruyama for the frame-bundle diffusion.

One step moves every point by exp_map(x, sqrt(2) u dB + Z(x) h), carries the
frame along that geodesic segment and re-orthonormalizes it against the metric
at the new node and time. Proposals that leave a domain with boundary are
projected back along the normal; the pushback is the local-time increment.

The stepper works on batches so the ensemble module can drive many paths at
once; the single-path entry points wrap it with a batch of one.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.frame_sde.rng import brownian_increments
from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.manifolds import ManifoldModel, OutsideInjectivityRadius

logger = logging.getLogger(__name__)

DEFAULT_GUARD_RADIUS = 50.0


class DivergedPath(RuntimeError):
    pass


class StepTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class FramePoint:
    """A node of a frame-bundle path: position x, frame u (chart columns), time t."""

    x: np.ndarray
    u: np.ndarray
    t: float


@dataclass
class PathSample:
    """One discretized trajectory with everything needed to replay it."""

    times: np.ndarray
    points: np.ndarray
    frames: np.ndarray
    increments: np.ndarray
    local_time_increments: np.ndarray
    normals: np.ndarray
    distances: np.ndarray
    seed: int
    path_index: int
    step: float
    manifold: ManifoldModel
    metric: EvolvingMetric | None = None
    exit_radius: float = math.inf
    exit_time: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def contacts(self) -> np.ndarray:
        """Boundary-hit flag per step."""
        return self.local_time_increments > 0

    @property
    def local_time(self) -> np.ndarray:
        """Cumulative local time at every node, starting at zero."""
        return np.concatenate([[0.0], np.cumsum(self.local_time_increments)])

    def node(self, k: int) -> FramePoint:
        return FramePoint(self.points[k], self.frames[k], float(self.times[k]))

    def metric_scale(self, k: int) -> float:
        return 1.0 if self.metric is None else float(self.metric.scale(self.times[k]))

    def transport_matrices(self) -> np.ndarray:
        """Chart matrices of the stochastic transport from node 0 to every node.

        Node k's matrix maps T_{x_0} to T_{x_k} as u_k u_0^{-1}, with
        u_0^{-1} = c(t_0) gamma(x_0) u_0^T on a conformal chart.
        """
        gamma0 = self.metric_scale(0) * float(self.manifold.metric_scale(self.points[0]))
        inverse0 = gamma0 * self.frames[0].T
        return np.einsum("knd,dm->knm", self.frames, inverse0)


def effective_step(duration: float, step: float) -> tuple[float, int]:
    """Largest step <= step that divides duration into a whole number of steps."""
    if step <= 0:
        raise ValueError(f"Step must be positive, got {step}")
    if duration < 0:
        raise ValueError(f"Duration must be non-negative, got {duration}")
    if duration == 0:
        return step, 0
    n_steps = max(1, math.ceil(duration / step - 1e-9))
    return duration / n_steps, n_steps


def check_step(manifold: ManifoldModel, step: float) -> None:
    if math.sqrt(2.0 * step) > 0.1 * manifold.step_scale:
        raise StepTooLarge(
            f"Step {step} moves about {math.sqrt(2.0 * step):.3g}, more than a tenth of the "
            f"{manifold.kind} length scale {manifold.step_scale:.3g}"
        )


def guard_distance(manifold: ManifoldModel, x0: np.ndarray, y: np.ndarray, scale: float) -> np.ndarray:
    """sqrt(c) times the distance from x0, the quantity the lifetime guard watches."""
    try:
        dist = manifold.distance(np.broadcast_to(x0, y.shape), y)
    except OutsideInjectivityRadius:
        # cut-locus ties on the torus: the distance is half a period
        dist = np.full(y.shape[:-1], manifold.injectivity_radius)
    return math.sqrt(scale) * np.asarray(dist, dtype=float)


def path_alive(manifold: ManifoldModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-path mask of finite states that are still inside the chart."""
    finite = np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(u), axis=(-2, -1))
    safe = np.where(finite[..., None], x, 0.0)
    return finite & manifold.contains(safe)


def advance(
    manifold: ManifoldModel,
    drift: DriftField,
    x: np.ndarray,
    u: np.ndarray,
    dB: np.ndarray,
    h: float,
    next_scale: float = 1.0,
    reflect: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One batched step.

    Args:
        x: points (N, n)
        u: frames (N, n, d), orthonormal for the metric at the current time
        dB: Brownian increments (N, d)
        h: step length
        next_scale: metric scale c(t + h) used to repair the new frames
        reflect: project proposals back into a domain with boundary

    Returns:
        (new points, new frames, pushback per path, inward normal per path)
    """
    v = math.sqrt(2.0) * np.einsum("knd,kd->kn", u, dB)
    if not drift.is_zero:
        v = v + h * drift.value(x)
    y = manifold.exp_map(x, v)
    frames = manifold.transport_along(x, v, u)
    if reflect:
        y, push, normal = manifold.reflect(y)
    else:
        push, normal = np.zeros(y.shape[:-1]), np.zeros_like(y)
    frames = manifold.orthonormalize(y, frames, scale=next_scale)
    return y, frames, push, normal


def initial_frame(
    manifold: ManifoldModel, x0: np.ndarray, metric: EvolvingMetric | None, start: float
) -> np.ndarray:
    scale = 1.0 if metric is None else float(metric.scale(start))
    return manifold.orthonormal_frame(x0, scale=scale)


def simulate_path(
    manifold: ManifoldModel,
    drift: DriftField | None,
    x0: np.ndarray,
    horizon: float,
    step: float,
    seed: int,
    path_index: int,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
    guard_radius: float = DEFAULT_GUARD_RADIUS,
    reflect: bool | None = None,
    frame: np.ndarray | None = None,
) -> PathSample:
    """Simulate one path of the L-diffusion from x0 over [start, horizon].

    Domains with boundary are reflected unless reflect is False.

    Raises:
        StepTooLarge: sqrt(2h) exceeds a tenth of the model's length scale
        DivergedPath: the path left the guard ball or produced non-finite values
    """
    drift = drift or ZeroDrift()
    drift.check_compatible(manifold)
    x0 = manifold.check_point(x0)
    if horizon <= start:
        raise ValueError(f"Horizon {horizon} must exceed the start time {start}")
    if metric is not None and horizon >= metric.horizon:
        raise ValueError(f"Horizon {horizon} reaches the metric blow-up time {metric.horizon}")
    if reflect is None:
        reflect = manifold.has_boundary

    h, n_steps = effective_step(horizon - start, step)
    check_step(manifold, h)
    d = manifold.dim
    times = start + h * np.arange(n_steps + 1)
    times[-1] = horizon
    increments = brownian_increments(seed, np.array([path_index]), n_steps, d, h)[0]

    points = np.empty((n_steps + 1, manifold.ambient_dim))
    frames = np.empty((n_steps + 1, manifold.ambient_dim, d))
    pushes = np.zeros(n_steps)
    normals = np.zeros((n_steps, manifold.ambient_dim))
    distances = np.zeros(n_steps + 1)
    points[0] = x0
    frames[0] = initial_frame(manifold, x0, metric, start) if frame is None else frame

    x, u = points[:1].copy(), frames[:1].copy()
    for k in range(n_steps):
        next_scale = 1.0 if metric is None else float(metric.scale(times[k + 1]))
        x, u, push, normal = advance(
            manifold, drift, x, u, increments[k : k + 1], h, next_scale, reflect
        )
        dist = guard_distance(manifold, x0, x, next_scale)[0]
        if not path_alive(manifold, x, u)[0] or dist > guard_radius:
            raise DivergedPath(
                f"Path {path_index} left the guard radius {guard_radius} at t = {times[k + 1]:.4g}"
            )
        points[k + 1], frames[k + 1] = x[0], u[0]
        pushes[k], normals[k], distances[k + 1] = push[0], normal[0], dist

    return PathSample(
        times=times,
        points=points,
        frames=frames,
        increments=increments,
        local_time_increments=pushes,
        normals=normals,
        distances=distances,
        seed=seed,
        path_index=path_index,
        step=h,
        manifold=manifold,
        metric=metric,
        exit_radius=guard_radius,
    )


def simulate_reflected_path(
    manifold: ManifoldModel,
    drift: DriftField | None,
    x0: np.ndarray,
    horizon: float,
    step: float,
    seed: int,
    path_index: int,
    **kwargs,
) -> PathSample:
    """Reflecting diffusion on a domain with boundary; see simulate_path."""
    if not manifold.has_boundary:
        raise ValueError(f"{manifold.kind} has no boundary to reflect on")
    return simulate_path(
        manifold, drift, x0, horizon, step, seed, path_index, reflect=True, **kwargs
    )


def first_exit_time(path: PathSample, radius: float) -> float:
    """sigma_r: first node time at which the path is at distance >= radius from x0.

    Returns inf when the recorded path never gets that far.
    """
    hits = np.nonzero(path.distances >= radius)[0]
    if len(hits) == 0:
        return math.inf
    return float(path.times[hits[0]])
