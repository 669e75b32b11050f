"""
Chunked path ensembles.

An ensemble simulates n_paths paths from one starting point and keeps only what
the estimators read: positions, frames and damped transports at a handful of
checkpoint times, cumulative path functionals, local time and guard data.

Paths run in chunks of consecutive indices. Each chunk is a pure function of
(seed, indices, experiment), so chunks can be mapped over a process pool and
concatenated in order with bit-identical results for any worker count.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.frame_sde.paths import (
    DEFAULT_GUARD_RADIUS,
    advance,
    check_step,
    guard_distance,
    initial_frame,
    path_alive,
)
from ricci_lab.frame_sde.rng import brownian_increments
from ricci_lab.frame_sde.transport import CurvatureOracle, IntervalOutsideGrid
from ricci_lab.geometry.drift import DriftField, ZeroDrift
from ricci_lab.geometry.manifolds import ManifoldModel

logger = logging.getLogger(__name__)

# Extra steps searched when aligning checkpoints with the step grid
GRID_SEARCH_FACTOR = 2


@dataclass(frozen=True)
class MonteCarloConfig:
    """Monte-Carlo knobs shared by every estimator.

    Args:
        n_paths: paths per ensemble
        step: requested time step h (the effective step divides every interval)
        seed: master seed of the per-path streams
        z: verdict threshold in standard errors
        jobs: worker processes; never changes results
        exclusion_tolerance: excluded fraction above which estimates are flagged
        guard_radius: lifetime guard radius in model-space distance units
        r_points: nodes of the r-grid used for time integrals
        chunk_size: paths per chunk
        atol: absolute slack added to the verdict threshold
    """

    n_paths: int = 10_000
    step: float = 1e-3
    seed: int = 0
    z: float = 3.0
    jobs: int = 1
    exclusion_tolerance: float = 1e-3
    guard_radius: float = DEFAULT_GUARD_RADIUS
    r_points: int = 16
    chunk_size: int = 1024
    atol: float = 1e-10

    def __post_init__(self):
        if self.n_paths <= 0:
            raise ValueError(f"n_paths must be positive, got {self.n_paths}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.r_points < 2:
            raise ValueError(f"r_points must be at least 2, got {self.r_points}")

    def with_overrides(self, **changes) -> "MonteCarloConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


class PathFunctional:
    """Rate K(t, x) integrated in time plus a boundary rate sigma(x) against dl.

    Subclasses must be picklable; the base class is the zero functional.
    """

    def rate(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(x).shape[:-1])

    def boundary_rate(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(x).shape[:-1])

    @property
    def constant(self) -> tuple[float, float] | None:
        """(K, sigma) when both rates are constants, else None."""
        return None

    @property
    def key(self) -> str:
        return repr(self)


@dataclass(frozen=True)
class ConstantRate(PathFunctional):
    """K = k everywhere and sigma = s on the boundary."""

    k: float = 0.0
    sigma: float = 0.0

    def rate(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(x).shape[:-1], self.k)

    def boundary_rate(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(x).shape[:-1], self.sigma)

    @property
    def constant(self) -> tuple[float, float]:
        return self.k, self.sigma

    @property
    def key(self) -> str:
        return f"const(k={self.k!r},sigma={self.sigma!r})"


def aligned_grid(start: float, checkpoints: np.ndarray, step: float) -> tuple[float, int, np.ndarray]:
    """Step and step count that put every checkpoint on a node.

    Returns:
        (effective step, number of steps, node index of each checkpoint)
    """
    horizon = float(checkpoints[-1])
    duration = horizon - start
    if duration <= 0:
        raise IntervalOutsideGrid(f"Horizon {horizon} must exceed the start {start}")
    fractions = (np.asarray(checkpoints, dtype=float) - start) / duration
    base = max(1, math.ceil(duration / step - 1e-9))
    for n_steps in range(base, GRID_SEARCH_FACTOR * base + 1):
        nodes = fractions * n_steps
        if np.all(np.abs(nodes - np.round(nodes)) < 1e-6):
            return duration / n_steps, n_steps, np.round(nodes).astype(int)
    logger.warning("Checkpoints do not fit a grid of about %d steps; snapping to nearest nodes", base)
    return duration / base, base, np.round(fractions * base).astype(int)


@dataclass(frozen=True)
class ChunkTask:
    """Everything one worker needs to simulate a chunk of paths."""

    manifold: ManifoldModel
    drift: DriftField
    metric: EvolvingMetric | None
    x0: np.ndarray
    start: float
    step: float
    n_steps: int
    nodes: tuple[int, ...]
    seed: int
    first_index: int
    count: int
    functionals: tuple[PathFunctional, ...]
    guard_radius: float
    keep_suffix: bool
    reflect: bool
    boundary: bool


@dataclass
class ChunkResult:
    points: np.ndarray
    frames: np.ndarray
    q: np.ndarray
    suffix_q: np.ndarray | None
    functionals: np.ndarray
    local_time: np.ndarray
    max_distance: np.ndarray
    included: np.ndarray
    digest: bytes


def _scale(metric: EvolvingMetric | None, t: float) -> float:
    return 1.0 if metric is None else float(metric.scale(t))


def _functional_increment(
    task: ChunkTask, t: float, x: np.ndarray, y: np.ndarray, push: np.ndarray
) -> np.ndarray:
    h = task.step
    out = np.empty((len(task.functionals), x.shape[0]))
    for i, functional in enumerate(task.functionals):
        constant = functional.constant
        if constant is not None:
            out[i] = constant[0] * h + constant[1] * push
        else:
            out[i] = 0.5 * h * (functional.rate(t, x) + functional.rate(t + h, y))
            out[i] += functional.boundary_rate(y) * push
    return out


def simulate_chunk(task: ChunkTask) -> ChunkResult:
    """Simulate paths first_index .. first_index + count - 1; top-level for pickling."""
    manifold, d = task.manifold, task.manifold.dim
    n, m, h = task.count, len(task.nodes), task.step
    indices = np.arange(task.first_index, task.first_index + n)
    increments = brownian_increments(task.seed, indices, task.n_steps, d, h)
    # per-path digests keep the checksum independent of the chunking
    digest = b"".join(
        hashlib.blake2b(row.tobytes(), digest_size=16).digest() for row in increments
    )
    oracle = CurvatureOracle(manifold, task.drift, task.metric)
    nodes = np.asarray(task.nodes)

    x = np.repeat(task.x0[None, :], n, axis=0)
    u = np.repeat(initial_frame(manifold, task.x0, task.metric, task.start)[None], n, axis=0)
    q = np.repeat(np.eye(d)[None], n, axis=0)
    suffix = np.repeat(np.eye(d)[None, None], n, axis=0).repeat(m, axis=1) if task.keep_suffix else None
    cumulative = np.zeros((len(task.functionals), n))
    local_time = np.zeros(n)
    max_distance = np.zeros(n)
    alive = np.ones(n, dtype=bool)

    rec_points = np.empty((n, m, manifold.ambient_dim))
    rec_frames = np.empty((n, m, manifold.ambient_dim, d))
    rec_q = np.empty((n, m, d, d))
    rec_functionals = np.zeros((n, len(task.functionals), m))
    rec_local = np.zeros((n, m))

    def record(k: int) -> None:
        for j in np.nonzero(nodes == k)[0]:
            rec_points[:, j], rec_frames[:, j], rec_q[:, j] = x, u, q
            rec_functionals[:, :, j] = cumulative.T
            rec_local[:, j] = local_time

    record(0)
    for k in range(task.n_steps):
        t = task.start + k * h
        live = np.nonzero(alive)[0]
        if len(live) == 0:
            break
        next_scale = _scale(task.metric, t + h)
        xl, ul = x[live], u[live]
        y, frames, push, normal = advance(
            manifold, task.drift, xl, ul, increments[live, k], h, next_scale, task.reflect
        )
        ok = path_alive(manifold, y, frames)
        dist = np.full(len(live), np.inf)
        if np.any(ok):
            dist[ok] = guard_distance(manifold, task.x0, y[ok], next_scale)
        ok &= dist <= task.guard_radius
        if not np.all(ok):
            alive[live[~ok]] = False
            live, xl, ul, y, frames = live[ok], xl[ok], ul[ok], y[ok], frames[ok]
            push, normal, dist = push[ok], normal[ok], dist[ok]
        if len(live) == 0:
            continue

        factor = oracle.step_factor(xl, y, ul, frames, t, h, push, normal, task.boundary)
        q[live] = q[live] @ factor
        if suffix is not None:
            active = np.nonzero(nodes <= k)[0]
            if len(active):
                block = suffix[np.ix_(live, active)]
                suffix[np.ix_(live, active)] = np.einsum("bjik,bkl->bjil", block, factor)
        if task.functionals:
            cumulative[:, live] += _functional_increment(task, t, xl, y, push)
        local_time[live] += push
        max_distance[live] = np.maximum(max_distance[live], dist)
        x[live], u[live] = y, frames
        record(k + 1)

    return ChunkResult(
        points=rec_points,
        frames=rec_frames,
        q=rec_q,
        suffix_q=suffix,
        functionals=rec_functionals,
        local_time=rec_local,
        max_distance=max_distance,
        included=alive,
        digest=digest,
    )


@dataclass
class PathEnsemble:
    """Checkpoint records of the included paths of one simulated ensemble.

    Arrays are indexed [path, checkpoint, ...]; excluded (diverged) paths are
    dropped and only counted.
    """

    manifold: ManifoldModel
    drift: DriftField
    metric: EvolvingMetric | None
    x0: np.ndarray
    start: float
    times: np.ndarray
    step: float
    seed: int
    n_paths: int
    points: np.ndarray
    frames: np.ndarray
    q: np.ndarray
    suffix_q: np.ndarray | None
    functionals: dict[str, np.ndarray]
    local_time: np.ndarray
    max_distance: np.ndarray
    checksum: str
    excluded_indices: np.ndarray
    exclusion_tolerance: float = 1e-3
    metadata: dict = field(default_factory=dict)

    @property
    def n_included(self) -> int:
        return self.points.shape[0]

    @property
    def n_excluded(self) -> int:
        return len(self.excluded_indices)

    @property
    def excluded_fraction(self) -> float:
        return self.n_excluded / self.n_paths

    @property
    def flagged(self) -> bool:
        return self.excluded_fraction > self.exclusion_tolerance

    @property
    def path_indices(self) -> np.ndarray:
        """Indices of the included paths, in order."""
        return np.setdiff1d(np.arange(self.n_paths), self.excluded_indices)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def checkpoint(self, t: float) -> int:
        """Index of checkpoint time t."""
        scale = max(1.0, abs(t))
        hits = np.nonzero(np.abs(self.times - t) <= 1e-9 * scale + 1e-6 * self.step)[0]
        if len(hits) == 0:
            raise IntervalOutsideGrid(f"Time {t} is not a checkpoint of this ensemble: {self.times}")
        return int(hits[0])

    def metric_scale(self, j: int) -> float:
        return _scale(self.metric, float(self.times[j]))

    def values(self, f, j: int = -1) -> np.ndarray:
        """f(X_{tau_j}) per included path."""
        return np.asarray(f.value(self.points[:, j]), dtype=float)

    def frame_gradients(self, f, j: int = -1) -> np.ndarray:
        """Frame coordinates of grad f(X_{tau_j}); equals //^{-1} grad f in the start frame."""
        return self.manifold.frame_coordinates(self.frames[:, j], f.differential(self.points[:, j]))

    def functional(self, weight: PathFunctional, j: int = -1, i: int | None = None) -> np.ndarray:
        """Integral of the functional over [tau_i, tau_j] per path; i None means the start."""
        values = self.functionals[weight.key]
        if i is None:
            return values[:, j].copy()
        return values[:, j] - values[:, i]

    def elapsed(self, j: int = -1, i: int | None = None) -> float:
        origin = self.start if i is None else float(self.times[i])
        return float(self.times[j]) - origin

    def suffix(self, j: int) -> np.ndarray:
        """Q_{tau_j, T} per path."""
        if self.suffix_q is None:
            raise ValueError("Ensemble was simulated without suffix transports")
        return self.suffix_q[:, j]


def simulate_ensemble(
    manifold: ManifoldModel,
    drift: DriftField | None,
    x0: np.ndarray,
    checkpoints,
    mc: MonteCarloConfig,
    metric: EvolvingMetric | None = None,
    start: float = 0.0,
    functionals=(),
    keep_suffix: bool = False,
    reflect: bool | None = None,
    boundary: bool = True,
) -> PathEnsemble:
    """Simulate mc.n_paths paths from x0 and record them at the checkpoint times.

    Args:
        checkpoints: increasing times in (start, horizon]; the last one is the horizon
        functionals: path functionals accumulated from start to every checkpoint
        keep_suffix: also record Q_{tau_j, horizon} for every checkpoint
        reflect: reflect at the boundary (default: when the manifold has one)
        boundary: apply the boundary factor to Q on contact steps
    """
    drift = drift or ZeroDrift()
    drift.check_compatible(manifold)
    x0 = manifold.check_point(x0)
    checkpoints = np.atleast_1d(np.asarray(checkpoints, dtype=float))
    if np.any(np.diff(checkpoints) <= 0) or checkpoints[0] < start:
        raise IntervalOutsideGrid(f"Checkpoints must increase from {start}: {checkpoints}")
    if metric is not None and checkpoints[-1] >= metric.horizon:
        raise ValueError(f"Horizon {checkpoints[-1]} reaches the metric blow-up time {metric.horizon}")
    if reflect is None:
        reflect = manifold.has_boundary

    h, n_steps, nodes = aligned_grid(start, checkpoints, mc.step)
    check_step(manifold, h)
    functionals = tuple(functionals)
    tasks = [
        ChunkTask(
            manifold=manifold,
            drift=drift,
            metric=metric,
            x0=x0,
            start=start,
            step=h,
            n_steps=n_steps,
            nodes=tuple(int(k) for k in nodes),
            seed=mc.seed,
            first_index=first,
            count=min(mc.chunk_size, mc.n_paths - first),
            functionals=functionals,
            guard_radius=mc.guard_radius,
            keep_suffix=keep_suffix,
            reflect=reflect,
            boundary=boundary,
        )
        for first in range(0, mc.n_paths, mc.chunk_size)
    ]
    logger.info(
        "Simulating %d paths on %s in %d chunks (h=%.3g, %d steps, %d jobs)",
        mc.n_paths, manifold.kind, len(tasks), h, n_steps, mc.jobs,
    )
    if mc.jobs > 1 and len(tasks) > 1:
        with Pool(processes=min(mc.jobs, len(tasks))) as pool:
            results = pool.map(simulate_chunk, tasks)
    else:
        results = [simulate_chunk(task) for task in tasks]

    included = np.concatenate([r.included for r in results])
    checksum = hashlib.blake2b(b"".join(r.digest for r in results), digest_size=16).hexdigest()

    def gather(name: str) -> np.ndarray:
        return np.concatenate([getattr(r, name) for r in results])[included]

    stacked = gather("functionals")
    ensemble = PathEnsemble(
        manifold=manifold,
        drift=drift,
        metric=metric,
        x0=x0,
        start=start,
        times=start + h * nodes,
        step=h,
        seed=mc.seed,
        n_paths=mc.n_paths,
        points=gather("points"),
        frames=gather("frames"),
        q=gather("q"),
        suffix_q=gather("suffix_q") if keep_suffix else None,
        functionals={f.key: stacked[:, i] for i, f in enumerate(functionals)},
        local_time=gather("local_time"),
        max_distance=gather("max_distance"),
        checksum=checksum,
        excluded_indices=np.nonzero(~included)[0],
        exclusion_tolerance=mc.exclusion_tolerance,
    )
    if ensemble.n_excluded:
        log = logger.warning if ensemble.flagged else logger.info
        log(
            "Excluded %d of %d paths beyond the guard radius %.3g",
            ensemble.n_excluded, mc.n_paths, mc.guard_radius,
        )
    return ensemble
