"""
Experiment orchestration: run the configured checks and recoveries and write
their results next to a run manifest.
"""

import logging
from dataclasses import dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

import numpy as np

from ricci_lab import __version__
from ricci_lab.cli.config import (
    INTEGRAL_VARIANTS,
    ConfigInvalid,
    ExperimentConfig,
    InequalityConfig,
    RecoveryConfig,
)
from ricci_lab.cli.emit import dump_json, emit_report, write_text
from ricci_lab.cli.factories import (
    build_drift,
    build_manifold,
    build_metric,
    build_setup,
    build_test_function,
)
from ricci_lab.frame_sde.dump import write_path_dump
from ricci_lab.frame_sde.ensemble import MonteCarloConfig, PathEnsemble
from ricci_lab.frame_sde.evolving import EvolvingMetric
from ricci_lab.frame_sde.paths import DivergedPath, simulate_path
from ricci_lab.geometry.drift import DriftField
from ricci_lab.geometry.functions import ScalarField
from ricci_lab.geometry.manifolds import ManifoldModel
from ricci_lab.inequalities.evaluators import (
    InequalitySetup,
    NonPositiveF,
    eval_flow_certificate,
    eval_gradient_ineq,
    eval_logsobolev_ineq,
    eval_poincare_ineq,
    eval_sharp_bound,
    prepare_ensemble,
)
from ricci_lab.inequalities.reports import InequalityReport, Verdict
from ricci_lab.recovery.boundary import DEFAULT_BOUNDARY_T_GRID, recover_II
from ricci_lab.recovery.estimates import RecoveryEstimate
from ricci_lab.recovery.interior import DEFAULT_T_GRID, recover_evolving, recover_ricci
from ricci_lab.recovery.scan import PinchScan, pinch_scan

logger = logging.getLogger(__name__)

COMMANDS = ("verify", "recover", "flowcert")
EXIT_OK = 0
EXIT_VIOLATED = 2
EXIT_INVALID = 3


@dataclass
class RunManifest:
    """What one run did and where its files are."""

    config_hash: str
    name: str
    commands: list[str]
    out_dir: str
    started: str
    finished: str = ""
    version: str = __version__
    seed: int = 0
    z: float = 3.0
    files: list[str] = field(default_factory=list)
    reports: list[InequalityReport] = field(default_factory=list)
    recoveries: list[RecoveryEstimate] = field(default_factory=list)
    scans: list[PinchScan] = field(default_factory=list)

    @property
    def n_violated(self) -> int:
        return sum(r.verdict == Verdict.VIOLATED for r in self.reports)

    @property
    def exit_status(self) -> int:
        return EXIT_VIOLATED if self.n_violated else EXIT_OK

    @property
    def exclusions(self) -> list[dict[str, Any]]:
        rows = [
            {
                "id": r.id,
                "n_paths": r.n_paths,
                "n_excluded": r.lhs.n_excluded,
                "flagged": r.lhs.flagged,
            }
            for r in self.reports
        ]
        rows += [
            {
                "id": f"{e.target}-{e.method}",
                "n_paths": e.n_paths,
                "n_excluded": e.n_excluded,
                "flagged": False,
            }
            for e in self.recoveries
        ]
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "name": self.name,
            "version": self.version,
            "commands": self.commands,
            "started": self.started,
            "finished": self.finished,
            "seed": self.seed,
            "files": self.files,
            "verdicts": {r.id: r.verdict.value for r in self.reports},
            "recoveries": {
                f"{e.target}-{e.method}": {"value": e.value, "se": e.se, "flag": e.flag}
                for e in self.recoveries
            },
            "brackets": [list(scan.bracket) for scan in self.scans],
            "exclusions": self.exclusions,
            "exit_status": self.exit_status,
        }


def evaluate_inequality(
    item: InequalityConfig,
    setup: InequalitySetup,
    f: ScalarField,
    x: np.ndarray,
    ensemble: PathEnsemble,
) -> InequalityReport:
    variant = item.variant
    if variant in ("ii", "ii'", "plain"):
        return eval_gradient_ineq(variant, setup, f, x, item.t, item.s, ensemble)
    if variant == "sharp":
        return eval_sharp_bound(setup, f, x, item.t, item.s, ensemble)
    if variant in ("iii", "iii'"):
        return eval_poincare_ineq(variant, setup, f, x, item.p, item.t, item.s, ensemble)
    return eval_logsobolev_ineq(variant, setup, f, x, item.t, item.s, ensemble)


def run_inequalities(
    config: ExperimentConfig, setup: InequalitySetup, f: ScalarField, x: np.ndarray
) -> list[InequalityReport]:
    """One ensemble per (s, t) cell, shared by every variant checked there."""
    cells: dict[tuple[float, float], list[InequalityConfig]] = {}
    for item in config.inequalities:
        cells.setdefault((item.s, item.t), []).append(item)

    reports = []
    for (s, t), items in cells.items():
        r_grid = any(item.variant in INTEGRAL_VARIANTS for item in items)
        ensemble = prepare_ensemble(setup, x, t, s, r_grid=r_grid)
        for item in items:
            try:
                reports.append(evaluate_inequality(item, setup, f, x, ensemble))
            except NonPositiveF as e:
                raise ConfigInvalid([f"test_function: {e}; add a positive shift"]) from e
    return reports


def run_recoveries(
    config: ExperimentConfig,
    manifold: ManifoldModel,
    drift: DriftField,
    metric: EvolvingMetric | None,
) -> tuple[list[RecoveryEstimate], list[PinchScan]]:
    """Each recovery runs at its own point and direction when it names them."""
    mc = config.mc.to_monte_carlo()
    estimates, scans = [], []
    for i, item in enumerate(config.recovery):
        try:
            result = recover_item(item, config, manifold, drift, metric, mc)
        except ValueError as e:
            raise ConfigInvalid([f"recovery[{i}]: {e}"]) from e
        (scans if isinstance(result, PinchScan) else estimates).append(result)
    return estimates, scans


def recover_item(
    item: RecoveryConfig,
    config: ExperimentConfig,
    manifold: ManifoldModel,
    drift: DriftField,
    metric: EvolvingMetric | None,
    mc: MonteCarloConfig,
) -> RecoveryEstimate | PinchScan:| PinchScan:
    grid = item.t_grid
    x = np.asarray(item.point if item.point is not None else config.point, dtype=float)
    direction = item.direction if item.direction is not None else config.direction
    direction = None if direction is None else np.asarray(direction, dtype=float)
    if item.target == "ricci":
        return recover_ricci(manifold, drift, x, direction, item.method, mc, grid or DEFAULT_T_GRID, item.p)
    if item.target == "II":
        return recover_II(
            manifold, drift, x, direction, item.method, mc, grid or DEFAULT_BOUNDARY_T_GRID, item.p
        )
    if item.target == "evolving":
        return recover_evolving(metric, drift, item.s, x, direction, item.method, mc, grid, item.p)
    return pinch_scan(
        manifold, drift, item.n_points, item.n_directions, item.method, mc, grid or DEFAULT_T_GRID, item.p
    )


def dump_paths(
    config: ExperimentConfig,
    manifold: ManifoldModel,
    drift: DriftField,
    metric: EvolvingMetric | None,
    x: np.ndarray,
    out: Path,
) -> Path | None:
    """Replay the first paths of the first configured cell into a binary dump."""
    count = config.output.dump_paths
    if count <= 0:
        return None
    if config.inequalities:
        s, t = config.inequalities[0].s, config.inequalities[0].t
    elif config.flow is not None:
        s, t = config.flow.s, config.flow.t
    else:
        s = 0.0
        t = max(config.recovery[0].t_grid or DEFAULT_T_GRID) if config.recovery else 0.1
    paths = []
    for index in range(min(count, config.mc.n_paths)):
        try:
            paths.append(
                simulate_path(
                    manifold, drift, x, t, config.mc.step, config.mc.seed, index,
                    metric=metric, start=s, guard_radius=config.mc.guard_radius,
                )
            )
        except DivergedPath as e:
            logger.warning("Skipping path %d in the dump: %s", index, e)
    if not paths:
        return None
    return write_path_dump(out / "paths.rlpd", paths)


def run_experiment(
    config: ExperimentConfig, commands=COMMANDS, out_dir: str | Path | None = None
) -> RunManifest:
    """Run the selected commands and write reports, tables, plots and the manifest.

    Raises:
        ConfigInvalid: objects cannot be built from the config
        OSError: results cannot be written
    """
    out = Path(out_dir or config.output.dir)
    config_hash = config.config_hash
    manifest = RunManifest(
        config_hash=config_hash,
        name=config.name,
        commands=list(commands),
        out_dir=str(out),
        started=datetime.now(UTC).isoformat(),
        seed=config.mc.seed,
        z=config.mc.z,
    )
    logger.info("Running %s (%s) with config hash %s", config.name, ", ".join(commands), config_hash)

    try:
        manifold = build_manifold(config)
        drift = build_drift(config, manifold)
        metric = build_metric(config, manifold)
    except ValueError as e:
        raise ConfigInvalid([str(e)]) from e
    x = np.asarray(config.point, dtype=float)

    if "verify" in commands and config.inequalities:
        setup = build_setup(config, manifold, config_hash)
        f = build_test_function(config, manifold)
        manifest.reports.extend(run_inequalities(config, setup, f, x))
    if "recover" in commands and config.recovery:
        estimates, scans = run_recoveries(config, manifold, drift, metric)
        manifest.recoveries.extend(estimates)
        manifest.scans.extend(scans)
    if "flowcert" in commands and config.flow is not None:
        if metric is None:
            raise ConfigInvalid(["flow: the flow certificate needs an evolving block"])
        f = build_test_function(config, manifold)
        flow = config.flow
        manifest.reports.extend(
            eval_flow_certificate(
                metric, drift, flow.k, f, x, flow.s, flow.t, config.mc.to_monte_carlo(),
                include_plain=flow.include_plain, config_hash=config_hash,
            )
        )

    out.mkdir(parents=True, exist_ok=True)
    for fmt in config.output.formats:
        manifest.files.extend(str(p) for p in emit_report(manifest, fmt))
    dump = dump_paths(config, manifold, drift, metric, x, out)
    if dump is not None:
        manifest.files.append(str(dump))
    write_text(out / "config.json", dump_json(config.to_dict()))
    manifest.files.append(str(out / "config.json"))

    manifest.finished = datetime.now(UTC).isoformat()
    write_text(out / "manifest.json", dump_json(manifest.to_dict()))
    logger.info(
        "Finished %s: %d reports (%d violated), %d recoveries, %d scans",
        config.name, len(manifest.reports), manifest.n_violated, len(manifest.recoveries), len(manifest.scans),
    )
    return manifest
