"""
Result files: JSON, CSV and parquet tables, and SVG plots.

Report and table files depend only on the results, so identical runs give
identical bytes; wall-clock times live in the manifest alone.
"""

import json
import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Any

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from ricci_lab.inequalities.reports import (
    InequalityReport,
    reports_to_frame,
    reports_to_json,
    write_reports_csv,
)
from ricci_lab.recovery.estimates import RecoveryEstimate

logger = logging.getLogger(__name__)

RECOVERY_COLUMNS = [
    "target",
    "method",
    "value",
    "se",
    "residual",
    "flag",
    "abscissa",
    "slope",
    "n_paths",
    "n_excluded",
    "checksum",
]

# fixed ids and text glyphs keep SVG output byte-stable
SVG_RC = {"svg.hashsalt": "ricci-lab", "svg.fonttype": "none"}


def _json_default(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default)


def write_text(file: Path, text: str) -> Path:
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(text + "\n")
    logger.info("Wrote %s", file)
    return file


def recoveries_to_frame(estimates: list[RecoveryEstimate]) -> pd.DataFrame:
    rows = [{column: e.to_dict()[column] for column in RECOVERY_COLUMNS} for e in estimates]
    return pd.DataFrame(rows, columns=RECOVERY_COLUMNS)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_")


def _new_axes():
    """A figure without pyplot, so no GUI backend is ever selected."""
    fig = Figure(figsize=(6, 4))
    return fig, fig.subplots()


def save_fig(fig: Figure, file: Path) -> Path:
    file.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(file, format="svg", metadata={"Date": None})
    logger.info("Wrote %s", file)
    return file


def plot_family(reports: list[InequalityReport], file: Path, z: float = 3.0) -> Path:
    """LHS and RHS against t with z SE bands for one inequality family."""
    reports = sorted(reports, key=lambda r: (r.t, r.s, r.p or 0.0))
    t = np.array([r.t for r in reports])
    fig, ax = _new_axes()
    for side, color in (("lhs", "tab:blue"), ("rhs", "tab:orange")):
        value = np.array([getattr(r, side).value for r in reports])
        se = np.array([getattr(r, side).se for r in reports])
        ax.plot(t, value, "o-", color=color, label=side.upper())
        ax.fill_between(t, value - z * se, value + z * se, color=color, alpha=0.25)
    first = reports[0]
    ax.set_title(f"{first.theorem} {first.family}")
    ax.set_xlabel("t")
    ax.legend()
    fig.tight_layout()
    return save_fig(fig, file)


def plot_recovery(estimate: RecoveryEstimate, file: Path, z: float = 3.0) -> Path:
    """Quotients against the fit abscissa with the fitted line and its intercept."""
    origin = float(estimate.details.get("s", 0.0))
    taus = np.asarray(estimate.t_grid) - origin
    x = np.sqrt(taus) if estimate.abscissa == "sqrt_t" else taus
    fig, ax = _new_axes()
    ax.errorbar(x, estimate.quotients, yerr=z * np.asarray(estimate.quotient_se), fmt="o", label="quotient")
    line = np.linspace(0.0, float(x.max()), 50)
    ax.plot(line, estimate.value + estimate.slope * line, "--", label="fit")
    ax.errorbar([0.0], [estimate.value], yerr=[z * estimate.se], fmt="s", color="black", label="intercept")
    ax.set_title(f"{estimate.target} by {estimate.method} ({estimate.flag})")
    ax.set_xlabel("sqrt(t)" if estimate.abscissa == "sqrt_t" else "t")
    ax.legend()
    fig.tight_layout()
    return save_fig(fig, file)


def plot_scan(table: pd.DataFrame, file: Path, z: float = 3.0) -> Path:
    """Intercept per (point, direction) cell with the bracket it spans."""
    cells = table.drop_duplicates(["point", "direction"])
    fig, ax = _new_axes()
    index = np.arange(len(cells))
    ax.errorbar(index, cells["intercept"], yerr=z * cells["se"], fmt="o", label="recovered")
    ax.plot(index, cells["oracle"], "x", color="black", label="oracle")
    ax.axhline(cells["intercept"].min(), linestyle=":", color="gray")
    ax.axhline(cells["intercept"].max(), linestyle=":", color="gray")
    ax.set_xlabel("cell")
    ax.set_title(f"Pinch scan by {cells['method'].iloc[0]}")
    ax.legend()
    fig.tight_layout()
    return save_fig(fig, file)


def emit_report(manifest, fmt: str) -> list[Path]:
    """Write the manifest's results in one format; returns the files written.

    Raises:
        OSError: a file cannot be written
        ValueError: unknown format
    """
    out = Path(manifest.out_dir)
    reports, estimates, scans = manifest.reports, manifest.recoveries, manifest.scans
    written: list[Path] = []

    if fmt == "json":
        if reports:
            written.append(write_text(out / "reports.json", reports_to_json(reports)))
        if estimates or scans:
            payload = {
                "estimates": [e.to_dict() for e in estimates],
                "scans": [
                    {
                        "inf": scan.inf.to_dict(),
                        "sup": scan.sup.to_dict(),
                        "table": scan.table.to_dict(orient="records"),
                    }
                    for scan in scans
                ],
            }
            written.append(write_text(out / "recovery.json", dump_json(payload)))
    elif fmt == "csv":
        if reports:
            out.mkdir(parents=True, exist_ok=True)
            written.append(write_reports_csv(reports, out / "reports.csv"))
        if estimates:
            file = out / "recovery.csv"
            recoveries_to_frame(estimates).to_csv(file, index=False, float_format="%.17g")
            written.append(file)
        for i, scan in enumerate(scans):
            file = out / f"scan-{i}.csv"
            scan.table.to_csv(file, index=False, float_format="%.17g")
            written.append(file)
    elif fmt == "parquet":
        out.mkdir(parents=True, exist_ok=True)
        if reports:
            file = out / "reports.parquet"
            reports_to_frame(reports).to_parquet(file, index=False)
            written.append(file)
        if estimates:
            file = out / "recovery.parquet"
            recoveries_to_frame(estimates).to_parquet(file, index=False)
            written.append(file)
        for i, scan in enumerate(scans):
            file = out / f"scan-{i}.parquet"
            scan.table.to_parquet(file, index=False)
            written.append(file)
    elif fmt == "svg":
        z = manifest.z
        families: dict[tuple[str, str], list[InequalityReport]] = defaultdict(list)
        for report in reports:
            families[(report.theorem, report.family)].append(report)
        for (theorem, family), group in families.items():
            written.append(plot_family(group, out / "plots" / f"{theorem}-{_slug(family)}.svg", z))
        for i, estimate in enumerate(estimates):
            name = f"recovery-{i}-{estimate.target}-{_slug(estimate.method)}.svg"
            written.append(plot_recovery(estimate, out / "plots" / name, z))
        for i, scan in enumerate(scans):
            written.append(plot_scan(scan.table, out / "plots" / f"scan-{i}.svg", z))
    else:
        raise ValueError(f"Unknown output format '{fmt}'")

    for file in written:
        logger.debug("Emitted %s", file)
    return written
