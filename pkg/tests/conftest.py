"""Test fixtures and configuration."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from ricci_lab.frame_sde.ensemble import MonteCarloConfig
from ricci_lab.geometry.drift import LinearOU
from ricci_lab.geometry.manifolds import Euclidean, Hyperbolic, Sphere


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def small_mc():
    """Cheap Monte-Carlo settings for exact or near-deterministic checks."""
    return MonteCarloConfig(n_paths=200, step=0.01, seed=7, chunk_size=64)


@pytest.fixture
def medium_mc():
    """Enough paths for statistical checks at a few percent."""
    return MonteCarloConfig(n_paths=4000, step=0.005, seed=11, chunk_size=1024)


@pytest.fixture
def plane():
    return Euclidean(2)


@pytest.fixture
def ou():
    """Z(x) = -x on the plane, so Ric^Z = id."""
    return LinearOU(1.0, dim=2)


@pytest.fixture
def unit_sphere():
    return Sphere(2)


@pytest.fixture
def north_pole():
    return np.array([0.0, 0.0, 1.0])


@pytest.fixture
def hyperbolic_plane():
    return Hyperbolic(2)


@pytest.fixture
def sample_config():
    """Minimal valid experiment config on the OU plane."""
    return {
        "version": 0.1,
        "name": "sample",
        "manifold": {"kind": "euclidean", "dim": 2},
        "drift": {"kind": "linear_ou", "rate": 1.0},
        "bounds": {"family": "static", "k1": 1.0, "k2": 1.0},
        "point": [0.0, 0.0],
        "direction": [1.0, 0.0],
        "test_function": {"kind": "coordinate", "index": 0},
        "inequalities": [
            {"variant": "ii", "t": 0.2},
            {"variant": "plain", "t": 0.2},
        ],
        "mc": {"n_paths": 200, "step": 0.01, "seed": 3, "chunk_size": 100},
        "output": {"dir": "results/sample", "formats": ["json", "csv", "svg"]},
    }
