"""Counter-based random streams for path simulation.

Every path draws its Brownian increments from its own Philox stream keyed by
(master seed, path index). A path therefore sees the same increments no matter
how paths are grouped into chunks or how many workers simulate them.
"""

import numpy as np

__all__ = ["brownian_increments", "path_generator"]


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Generator for one path, independent of every other path index."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(path_index),)))
    )


def brownian_increments(
    seed: int, path_indices: np.ndarray, steps: int, dim: int, step: float
) -> np.ndarray:
    """Increments Delta B of shape (len(path_indices), steps, dim) with variance step."""
    path_indices = np.asarray(path_indices, dtype=np.int64)
    out = np.empty((len(path_indices), steps, dim))
    scale = np.sqrt(step)
    for row, index in enumerate(path_indices):
        out[row] = scale * path_generator(seed, int(index)).standard_normal((steps, dim))
    return out
