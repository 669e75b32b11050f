"""
Experiment configuration: a frozen dataclass tree read from YAML, JSON or TOML.

Every problem found while reading a file is collected and reported at once,
so a config with several mistakes fails with the full list.
"""

import json
import logging
import math
import tomllib
import types
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from ricci_lab.frame_sde.ensemble import MonteCarloConfig
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.drift import drift_from_spec
from ricci_lab.geometry.manifolds import MANIFOLD_KINDS, manifold_from_spec
from ricci_lab.inequalities.bounds import FAMILIES
from ricci_lab.inequalities.reports import VARIANT_FAMILIES
from ricci_lab.recovery.boundary import BOUNDARY_METHODS
from ricci_lab.recovery.estimates import MIN_GRID_POINTS
from ricci_lab.recovery.interior import INTERIOR_METHODS

logger = logging.getLogger(__name__)

CONFIG_VERSION = 0.1
TEST_FUNCTION_KINDS = ("pinned", "neumann", "coordinate", "sine", "constant")
RECOVERY_TARGETS = ("ricci", "scan", "II", "evolving")
OUTPUT_FORMATS = ("json", "csv", "svg", "parquet")
INTEGRAL_VARIANTS = ("iii", "iii'", "iv", "iv'")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class ConfigInvalid(ValueError):
    """Raised with every problem found in a configuration."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ManifoldConfig:
    kind: str = "euclidean"
    dim: int = 2
    radius: float = 1.0
    scale: float = 1.0
    periods: tuple[float, ...] | None = None

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"kind": self.kind, "dim": self.dim}
        if self.kind in ("sphere", "euclidean_ball"):
            spec["radius"] = self.radius
        if self.kind == "hyperbolic":
            spec["scale"] = self.scale
        if self.kind == "flat_torus" and self.periods:
            spec["periods"] = list(self.periods)
        return spec


@dataclass(frozen=True)
class DriftConfig:
    kind: str = "zero"
    rate: float = 1.0
    center: tuple[float, ...] | None = None
    hessian: tuple[tuple[float, ...], ...] | None = None

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"kind": self.kind, "rate": self.rate}
        if self.center is not None:
            spec["center"] = list(self.center)
        if self.hessian is not None:
            spec["hessian"] = [list(row) for row in self.hessian]
        return spec


@dataclass(frozen=True)
class EvolvingConfig:
    """Scale family c(t) = initial_scale + rate * t over the manifold block."""

    initial_scale: float = 1.0
    rate: float = 0.0


@dataclass(frozen=True)
class BoundsConfig:
    family: str = "static"
    k1: float = 0.0
    k2: float = 0.0
    sigma1: float = 0.0
    sigma2: float = 0.0


@dataclass(frozen=True)
class TestFunctionConfig:
    """f = scale * base + shift, base chosen by kind."""

    __test__ = False

    kind: str = "pinned"
    cutoff: float | None = None
    shift: float = 0.0
    scale: float = 1.0
    index: int = 0
    frequency: float = 1.0
    phase: float = 0.0
    amplitude: float = 1.0
    value: float = 1.0


@dataclass(frozen=True)
class InequalityConfig:
    variant: str
    t: float
    s: float = 0.0
    p: float | None = None


@dataclass(frozen=True)
class RecoveryConfig:
    target: str
    method: str
    t_grid: tuple[float, ...] | None = None
    p: float = 2.0
    s: float = 0.0
    n_points: int = 8
    n_directions: int = 4
    point: tuple[float, ...] | None = None
    direction: tuple[float, ...] | None = None


@dataclass(frozen=True)
class FlowConfig:
    k: float = 0.0
    s: float = 0.0
    t: float = 0.1
    include_plain: bool = True


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 10_000
    step: float = 1e-3
    seed: int = 0
    z: float = 3.0
    jobs: int = 1
    chunk_size: int = 1024
    r_points: int = 16
    guard_radius: float = 50.0
    exclusion_tolerance: float = 1e-3
    atol: float = 1e-10

    def to_monte_carlo(self) -> MonteCarloConfig:
        return MonteCarloConfig(**asdict(self))


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"
    formats: tuple[str, ...] = ("json", "csv", "svg")
    dump_paths: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: the diffusion, the asserted bounds and what to run on them."""

    manifold: ManifoldConfig
    point: tuple[float, ...]
    direction: tuple[float, ...] | None = None
    version: float = CONFIG_VERSION
    name: str = "experiment"
    drift: DriftConfig = field(default_factory=DriftConfig)
    evolving: EvolvingConfig | None = None
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    test_function: TestFunctionConfig = field(default_factory=TestFunctionConfig)
    inequalities: tuple[InequalityConfig, ...] = ()
    recovery: tuple[RecoveryConfig, ...] = ()
    flow: FlowConfig | None = None
    mc: McConfig = field(default_factory=McConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """Build and validate a config.

        Raises:
            ConfigInvalid: with every structural and semantic problem found
        """
        errors: list[str] = []
        if not isinstance(data, dict):
            raise ConfigInvalid([f"Config must be a mapping, got {type(data).__name__}"])
        config = _build(cls, data, "config", errors)
        if errors:
            raise ConfigInvalid(errors)
        errors.extend(validate(config))
        if errors:
            raise ConfigInvalid(errors)
        return config

    def to_dict(self) -> dict[str, Any]:
        return _plain(asdict(self))

    def canonical_json(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def config_hash(self) -> str:
        """FNV-1a of the canonical form; the job count is left out."""
        data = self.to_dict()
        data["mc"].pop("jobs")
        return fnv1a_64(canonical_json(data).encode())

    def with_overrides(
        self, seed: int | None = None, n_paths: int | None = None, jobs: int | None = None
    ) -> "ExperimentConfig":
        changes = {
            k: v for k, v in {"seed": seed, "n_paths": n_paths, "jobs": jobs}.items() if v is not None
        }
        if not changes:
            return self
        config = replace(self, mc=replace(self.mc, **changes))
        problems = validate(config)
        if problems:
            raise ConfigInvalid(problems)
        return config

    @property
    def horizon(self) -> float:
        """Blow-up time T_c of the evolving metric, or infinity."""
        if self.evolving is None:
            return math.inf
        return EvolvingMetric(
            manifold_from_spec(self.manifold.to_spec()),
            self.evolving.initial_scale,
            self.evolving.rate,
        ).horizon


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def fnv1a_64(data: bytes) -> str:
    value = FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return f"{value:016x}"


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


def _build(cls, data: Any, where: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{where}: expected a mapping, got {type(data).__name__}")
        return None
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{where}: unknown key '{key}'")
    values = {}
    for f in fields(cls):
        if f.name in data:
            values[f.name] = _coerce(hints[f.name], data[f.name], f"{where}.{f.name}", errors)
    try:
        return cls(**values)
    except TypeError as e:
        errors.append(f"{where}: {e}")
        return None


def _coerce(hint, value: Any, where: str, errors: list[str]) -> Any:
    origin = get_origin(hint)
    if origin in (Union, types.UnionType):
        if value is None:
            return None
        hint = next(arg for arg in get_args(hint) if arg is not type(None))
        origin = get_origin(hint)
    if origin is tuple:
        if not isinstance(value, list | tuple):
            errors.append(f"{where}: expected a list, got {value!r}")
            return ()
        inner = get_args(hint)[0]
        return tuple(_coerce(inner, v, f"{where}[{i}]", errors) for i, v in enumerate(value))
    if is_dataclass(hint):
        return _build(hint, value, where, errors)
    if hint is bool:
        if not isinstance(value, bool):
            errors.append(f"{where}: expected true or false, got {value!r}")
        return bool(value)
    if hint in (int, float):
        if isinstance(value, bool) or not isinstance(value, int | float):
            errors.append(f"{where}: expected a number, got {value!r}")
            return hint()
        if hint is int and value != int(value):
            errors.append(f"{where}: expected an integer, got {value!r}")
        return hint(value)
    if hint is str:
        if not isinstance(value, str):
            errors.append(f"{where}: expected a string, got {value!r}")
        return str(value)
    return value


def validate(config: ExperimentConfig) -> list[str]:
    """Semantic checks; returns the list of problems, empty when the config is valid."""
    errors: list[str] = []
    m = config.manifold
    manifold = None
    if m.kind not in MANIFOLD_KINDS:
        errors.append(f"manifold.kind: unknown kind '{m.kind}'; expected one of {sorted(MANIFOLD_KINDS)}")
    else:
        try:
            manifold = manifold_from_spec(m.to_spec())
        except ValueError as e:
            errors.append(f"manifold: {e}")

    if manifold is not None:
        try:
            drift_from_spec(config.drift.to_spec(), manifold.dim).check_compatible(manifold)
        except ValueError as e:
            errors.append(f"drift: {e}")
        try:
            manifold.check_point(np.asarray(config.point, dtype=float))
        except ValueError as e:
            errors.append(f"point: {e}")
        if config.direction is not None and len(config.direction) != manifold.ambient_dim:
            errors.append(
                f"direction: expected {manifold.ambient_dim} components, got {len(config.direction)}"
            )

    b = config.bounds
    if b.family not in FAMILIES:
        errors.append(f"bounds.family: unknown family '{b.family}'; expected one of {FAMILIES}")
    if b.k1 > b.k2:
        errors.append(f"bounds: k1 = {b.k1} exceeds k2 = {b.k2}")
    if b.sigma1 > b.sigma2:
        errors.append(f"bounds: sigma1 = {b.sigma1} exceeds sigma2 = {b.sigma2}")
    if b.family == "evolving" and config.evolving is None:
        errors.append("bounds: the evolving family needs an evolving block")
    if config.evolving is not None and config.evolving.initial_scale <= 0:
        errors.append(f"evolving.initial_scale must be positive, got {config.evolving.initial_scale}")
    if config.test_function.kind not in TEST_FUNCTION_KINDS:
        errors.append(
            f"test_function.kind: unknown kind '{config.test_function.kind}'; "
            f"expected one of {TEST_FUNCTION_KINDS}"
        )
    if config.test_function.kind in ("pinned", "neumann") and config.direction is None:
        errors.append(f"direction: required by the {config.test_function.kind} test function")

    horizon = config.horizon if not errors else math.inf
    for i, item in enumerate(config.inequalities):
        where = f"inequalities[{i}]"
        if item.variant not in VARIANT_FAMILIES:
            errors.append(f"{where}.variant: unknown variant '{item.variant}'")
        if not item.s < item.t:
            errors.append(f"{where}: need s < t, got s = {item.s}, t = {item.t}")
        if item.t >= horizon:
            errors.append(f"{where}: t = {item.t} reaches the metric blow-up time {horizon}")
        if item.variant in ("iii", "iii'") and (item.p is None or not 1.0 < item.p <= 2.0):
            errors.append(f"{where}.p: must lie in (1, 2], got {item.p}")
        if item.variant == "sharp" and not b.k1 < b.k2:
            errors.append(f"{where}: the sharp bound needs k1 < k2")

    for i, item in enumerate(config.recovery):
        where = f"recovery[{i}]"
        if item.target not in RECOVERY_TARGETS:
            errors.append(f"{where}.target: unknown target '{item.target}'; expected one of {RECOVERY_TARGETS}")
        methods = BOUNDARY_METHODS if item.target == "II" else INTERIOR_METHODS
        if item.method not in methods:
            errors.append(f"{where}.method: unknown method '{item.method}' for target {item.target}")
        if item.t_grid is not None:
            if len(set(item.t_grid)) < MIN_GRID_POINTS:
                errors.append(f"{where}.t_grid: needs at least {MIN_GRID_POINTS} distinct times")
            if any(t <= item.s for t in item.t_grid):
                errors.append(f"{where}.t_grid: every time must exceed s = {item.s}")
            if max(item.t_grid, default=0.0) >= horizon:
                errors.append(f"{where}.t_grid: reaches the metric blow-up time {horizon}")
        if item.method in ("i", "ii", "grad", "grad-semigroup") and not item.p > 0:
            errors.append(f"{where}.p: must be positive, got {item.p}")
        if item.method == "ii" and not 1.0 < item.p <= 2.0:
            errors.append(f"{where}.p: must lie in (1, 2], got {item.p}")
        if item.method.startswith("variance") and not 1.0 <= item.p <= 2.0:
            errors.append(f"{where}.p: must lie in [1, 2], got {item.p}")
        if item.target == "evolving" and config.evolving is None:
            errors.append(f"{where}: evolving recovery needs an evolving block")
        if manifold is not None and item.point is not None:
            try:
                manifold.check_point(np.asarray(item.point, dtype=float))
            except ValueError as e:
                errors.append(f"{where}.point: {e}")
        if item.target != "scan" and item.direction is None and config.direction is None:
            errors.append(f"{where}: needs a direction")
        if item.target == "scan" and (item.n_points < 1 or item.n_directions < 1):
            errors.append(f"{where}: n_points and n_directions must be positive")

    if config.flow is not None:
        if config.evolving is None:
            errors.append("flow: the flow certificate needs an evolving block")
        if not config.flow.s < config.flow.t:
            errors.append(f"flow: need s < t, got s = {config.flow.s}, t = {config.flow.t}")
        if config.flow.t >= horizon:
            errors.append(f"flow: t = {config.flow.t} reaches the metric blow-up time {horizon}")

    mc = config.mc
    if mc.n_paths <= 0:
        errors.append(f"mc.n_paths must be positive, got {mc.n_paths}")
    if mc.step <= 0:
        errors.append(f"mc.step must be positive, got {mc.step}")
    if mc.jobs <= 0:
        errors.append(f"mc.jobs must be positive, got {mc.jobs}")
    if mc.chunk_size <= 0:
        errors.append(f"mc.chunk_size must be positive, got {mc.chunk_size}")
    if mc.r_points < 2:
        errors.append(f"mc.r_points must be at least 2, got {mc.r_points}")
    unknown = set(config.output.formats) - set(OUTPUT_FORMATS)
    if unknown:
        errors.append(f"output.formats: unknown formats {sorted(unknown)}; expected {OUTPUT_FORMATS}")
    if config.output.dump_paths < 0:
        errors.append(f"output.dump_paths must be non-negative, got {config.output.dump_paths}")
    return errors


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a config file by suffix: .yaml/.yml, .json or .toml."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".yaml", ".yml"):
        with path.open() as f:
            return yaml.safe_load(f)
    if suffix == ".json":
        with path.open() as f:
            return json.load(f)
    if suffix == ".toml":
        with path.open("rb") as f:
            return tomllib.load(f)
    raise ConfigInvalid([f"Unsupported config format '{suffix}'; use .yaml, .json or .toml"])


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment file.

    Raises:
        OSError: the file cannot be read
        ConfigInvalid: the file does not parse or does not validate
    """
    try:
        data = read_config_file(path)
    except (yaml.YAMLError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigInvalid([f"{path}: {e}"]) from e
    config = ExperimentConfig.from_dict(data)
    logger.info("Loaded %s (config hash %s)", path, config.config_hash)
    return config
