"""
Binary path dump.

Layout, little-endian throughout:
    header  magic b"RLPD", version u32, d u32, chart dim u32, h f64, steps u32, n_paths u32
    per path  node coordinates (steps + 1) x chart dim, local-time increments (steps),
              Brownian increments steps x d, all f64
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ricci_lab.frame_sde.paths import PathSample

logger = logging.getLogger(__name__)

MAGIC = b"RLPD"
DUMP_VERSION = 1
HEADER = struct.Struct("<4sIIIdII")


class DumpFormatError(ValueError):
    pass


@dataclass
class DumpedPath:
    points: np.ndarray
    local_time_increments: np.ndarray
    increments: np.ndarray


def write_path_dump(file: str | Path, paths: list[PathSample]) -> Path:
    """Write paths sharing one step and step count to file."""
    file = Path(file)
    if not paths:
        raise ValueError("Nothing to dump")
    first = paths[0]
    d, ambient, steps = first.manifold.dim, first.manifold.ambient_dim, first.n_steps
    for path in paths:
        if path.n_steps != steps or path.step != first.step:
            raise ValueError("Dumped paths must share the step and the number of steps")

    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, "wb") as out:
        out.write(HEADER.pack(MAGIC, DUMP_VERSION, d, ambient, first.step, steps, len(paths)))
        for path in paths:
            out.write(np.ascontiguousarray(path.points, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(path.local_time_increments, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())
    logger.info("Wrote %d paths to %s", len(paths), file)
    return file


def read_path_dump(file: str | Path) -> tuple[dict, list[DumpedPath]]:
    """Read a dump back as (header fields, paths)."""
    raw = Path(file).read_bytes()
    if len(raw) < HEADER.size:
        raise DumpFormatError(f"{file} is too short for a path dump header")
    magic, version, d, ambient, step, steps, n_paths = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DumpFormatError(f"{file} is not a path dump (magic {magic!r})")
    if version != DUMP_VERSION:
        raise DumpFormatError(f"Unsupported path dump version {version}")

    sizes = ((steps + 1) * ambient, steps, steps * d)
    per_path = sum(sizes)
    expected = HEADER.size + 8 * per_path * n_paths
    if len(raw) != expected:
        raise DumpFormatError(f"{file} has {len(raw)} bytes, expected {expected}")

    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(n_paths, per_path)
    paths = []
    for row in data:
        points, pushes, increments = np.split(row, np.cumsum(sizes)[:-1])
        paths.append(
            DumpedPath(points.reshape(steps + 1, ambient), pushes.copy(), increments.reshape(steps, d))
        )
    header = {"version": version, "d": d, "ambient_dim": ambient, "h": step, "steps": steps, "n_paths": n_paths}
    return header, paths
