#!/usr/bin/env python3
"""
ricci-lab command line: verify inequalities, recover curvature, certify flows.

Exit status is 0 when nothing is violated, 2 when any report is VIOLATED and
3 when the config is invalid or results cannot be written.
"""

import logging
import os
import sys

import click

from ricci_lab.cli.config import ConfigInvalid, load_config
from ricci_lab.cli.runner import EXIT_INVALID, EXIT_OK, run_experiment

JOBS_ENV = "RICCI_LAB_JOBS"


def experiment_options(command):
    """Options shared by every experiment command."""
    options = [
        click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment YAML, JSON or TOML"),
        click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory (default: output.dir)"),
        click.option("--seed", type=int, default=None, help="Override the master seed"),
        click.option("--paths", "n_paths", type=int, default=None, help="Override the number of paths"),
        click.option("--jobs", type=int, default=None, help=f"Worker processes ({JOBS_ENV} takes precedence)"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _run(commands, config_path, out_dir, seed, n_paths, jobs) -> None:
    env_jobs = os.environ.get(JOBS_ENV)
    try:
        if env_jobs:
            try:
                jobs = int(env_jobs)
            except ValueError as e:
                raise ConfigInvalid([f"{JOBS_ENV} must be an integer, got '{env_jobs}'"]) from e
        config = load_config(config_path).with_overrides(seed=seed, n_paths=n_paths, jobs=jobs)
        manifest = run_experiment(config, commands, out_dir)
    except ConfigInvalid as e:
        click.echo(f"✗ Invalid configuration ({len(e.problems)} problems):", err=True)
        for problem in e.problems:
            click.echo(f"  {problem}", err=True)
        sys.exit(EXIT_INVALID)
    except OSError as e:
        click.echo(f"✗ {e}", err=True)
        sys.exit(EXIT_INVALID)

    for report in manifest.reports:
        mark = "✗" if report.verdict.value == "VIOLATED" else "✓"
        click.echo(
            f"{mark} {report.id}: lhs={report.lhs.value:.6g} rhs={report.rhs.value:.6g} "
            f"margin={report.margin:.3g} ± {report.se_margin:.2g} {report.verdict.value}"
        )
    for estimate in manifest.recoveries:
        mark = "✗" if estimate.low_confidence else "✓"
        click.echo(f"{mark} {estimate.target} by {estimate.method}: {estimate.value:.4g} ± {estimate.se:.2g}")
    for scan in manifest.scans:
        low, high = scan.bracket
        click.echo(f"✓ Pinch bracket [{low:.4g}, {high:.4g}]")
    click.echo(f"  Output: {manifest.out_dir} (config hash {manifest.config_hash})")
    if manifest.exit_status != EXIT_OK:
        click.echo(f"✗ {manifest.n_violated} report(s) VIOLATED", err=True)
    sys.exit(manifest.exit_status)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.version_option(package_name="ricci-lab")
def cli(verbose: bool):
    """Monte-Carlo checks of pinched-curvature functional inequalities."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@experiment_options
def verify(config_path, out_dir, seed, n_paths, jobs):
    """Evaluate the configured inequalities."""
    _run(("verify",), config_path, out_dir, seed, n_paths, jobs)


@cli.command()
@experiment_options
def recover(config_path, out_dir, seed, n_paths, jobs):
    """Recover curvature and boundary curvature from small-time limits."""
    _run(("recover",), config_path, out_dir, seed, n_paths, jobs)


@cli.command()
@experiment_options
def flowcert(config_path, out_dir, seed, n_paths, jobs):
    """Check an evolving metric against the flow equation."""
    _run(("flowcert",), config_path, out_dir, seed, n_paths, jobs)


if __name__ == "__main__":
    cli()
