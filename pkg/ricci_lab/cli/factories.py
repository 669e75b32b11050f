"""
Build the simulation objects an ExperimentConfig describes.
"""

import numpy as np

from ricci_lab.cli.config import ConfigInvalid, ExperimentConfig
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.geometry.drift import DriftField, drift_from_spec
from ricci_lab.geometry.functions import (
    ConstantFunction,
    CoordinateFunction,
    ScalarField,
    SineFunction,
    neumann_test_function,
    pinned_test_function,
)
from ricci_lab.geometry.manifolds import ManifoldModel, manifold_from_spec
from ricci_lab.inequalities.bounds import CurvatureBounds
from ricci_lab.inequalities.evaluators import InequalitySetup


def build_manifold(config: ExperimentConfig) -> ManifoldModel:
    return manifold_from_spec(config.manifold.to_spec())


def build_drift(config: ExperimentConfig, manifold: ManifoldModel) -> DriftField:
    return drift_from_spec(config.drift.to_spec(), manifold.dim)


def build_metric(config: ExperimentConfig, manifold: ManifoldModel) -> EvolvingMetric | None:
    if config.evolving is None:
        return None
    return EvolvingMetric(manifold, config.evolving.initial_scale, config.evolving.rate)


def build_bounds(config: ExperimentConfig) -> CurvatureBounds:
    b = config.bounds
    return CurvatureBounds(b.family, b.k1, b.k2, b.sigma1, b.sigma2)


def build_test_function(config: ExperimentConfig, manifold: ManifoldModel) -> ScalarField:
    """The configured f = scale * base + shift.

    Raises:
        ConfigInvalid: the base function cannot be built at the configured point
    """
    spec = config.test_function
    x = np.asarray(config.point, dtype=float)
    try:
        if spec.kind == "pinned":
            base = pinned_test_function(manifold, x, np.asarray(config.direction), spec.cutoff)
        elif spec.kind == "neumann":
            cutoff = np.inf if spec.cutoff is None else spec.cutoff
            base = neumann_test_function(manifold, x, np.asarray(config.direction), cutoff)
        elif spec.kind == "coordinate":
            base = CoordinateFunction(manifold, spec.index)
        elif spec.kind == "sine":
            base = SineFunction(manifold, spec.index, spec.frequency, spec.phase, spec.amplitude)
        else:
            base = ConstantFunction(manifold, spec.value)
    except ValueError as e:
        raise ConfigInvalid([f"test_function: {e}"]) from e
    f = base
    if spec.scale != 1.0:
        f = f * spec.scale
    if spec.shift:
        f = f + spec.shift
    return f


def build_setup(config: ExperimentConfig, manifold: ManifoldModel, config_hash: str = "") -> InequalitySetup:
    try:
        return InequalitySetup(
            manifold=manifold,
            bounds=build_bounds(config),
            mc=config.mc.to_monte_carlo(),
            drift=build_drift(config, manifold),
            metric=build_metric(config, manifold),
            config_hash=config_hash,
        )
    except ValueError as e:
        raise ConfigInvalid([f"bounds: {e}"]) from e
