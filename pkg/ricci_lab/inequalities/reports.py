"""
Inequality reports, verdicts and their JSON/CSV codec.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import pandas as pd

from ricci_lab.semigroup.statistics import McEstimate, MeanStatistic

# Config variant name -> report family
VARIANT_FAMILIES = {
    "ii": "grad",
    "ii'": "grad_prime",
    "iii": "poincare",
    "iii'": "poincare_prime",
    "iv": "logsob",
    "iv'": "logsob_prime",
    "sharp": "sharp",
    "plain": "gradient_estimate",
}

REPORT_COLUMNS = [
    "id",
    "family",
    "theorem",
    "lhs",
    "rhs",
    "se_lhs",
    "se_rhs",
    "margin",
    "se_margin",
    "verdict",
    "n_paths",
    "seed",
    "config_hash",
    "s",
    "t",
    "p",
    "n_excluded",
    "flagged",
    "checksum",
]


class Verdict(str, Enum):
    HOLDS = "HOLDS"
    VIOLATED = "VIOLATED"
    INCONCLUSIVE = "INCONCLUSIVE"


def decide(margin: float, se: float, z: float = 3.0, atol: float = 1e-10) -> Verdict:
    """HOLDS iff margin >= -(z SE + atol); non-finite margins are INCONCLUSIVE."""
    if not (math.isfinite(margin) and math.isfinite(se)):
        return Verdict.INCONCLUSIVE
    if margin >= -(z * se + atol):
        return Verdict.HOLDS
    return Verdict.VIOLATED


@dataclass
class InequalityReport:
    """One side-by-side evaluation of an inequality."""

    id: str
    family: str
    theorem: str
    lhs: McEstimate
    rhs: McEstimate
    margin: float
    se_margin: float
    verdict: Verdict
    seed: int
    t: float
    s: float = 0.0
    p: float | None = None
    config_hash: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        family: str,
        theorem: str,
        lhs: MeanStatistic,
        rhs: MeanStatistic,
        ensemble,
        z: float,
        atol: float,
        t: float,
        s: float = 0.0,
        p: float | None = None,
        verdict: Verdict | None = None,
        config_hash: str = "",
        **details,
    ) -> "InequalityReport":
        """Assemble a report from CRN statistics; margin = rhs - lhs keeps their covariance."""
        margin = rhs - lhs
        value, se = float(margin.value), float(margin.se)
        suffix = f"-p{p:g}" if p is not None else ""
        return cls(
            id=f"{theorem}-{family}{suffix}-s{s:g}-t{t:g}",
            family=family,
            theorem=theorem,
            lhs=McEstimate.from_statistic(lhs, ensemble),
            rhs=McEstimate.from_statistic(rhs, ensemble),
            margin=value,
            se_margin=se,
            verdict=verdict or decide(value, se, z, atol),
            seed=ensemble.seed,
            t=t,
            s=s,
            p=p,
            config_hash=config_hash,
            details=details,
        )

    @property
    def n_paths(self) -> int:
        return self.lhs.n_paths

    def to_dict(self) -> dict[str, Any]:
        row = {
            "id": self.id,
            "family": self.family,
            "theorem": self.theorem,
            "lhs": self.lhs.value,
            "rhs": self.rhs.value,
            "se_lhs": self.lhs.se,
            "se_rhs": self.rhs.se,
            "margin": self.margin,
            "se_margin": self.se_margin,
            "verdict": self.verdict.value,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "s": self.s,
            "t": self.t,
            "p": self.p,
            "n_excluded": self.lhs.n_excluded,
            "flagged": self.lhs.flagged,
            "checksum": self.lhs.checksum,
        }
        if self.details:
            row["details"] = _plain(self.details)
        return row

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "InequalityReport":
        def estimate(side: str) -> McEstimate:
            return McEstimate(
                value=data[side],
                se=data[f"se_{side}"],
                n_paths=int(data["n_paths"]),
                n_excluded=int(data.get("n_excluded", 0)),
                checksum=data.get("checksum", ""),
                flagged=bool(data.get("flagged", False)),
            )

        return cls(
            id=data["id"],
            family=data["family"],
            theorem=data["theorem"],
            lhs=estimate("lhs"),
            rhs=estimate("rhs"),
            margin=float(data["margin"]),
            se_margin=float(data["se_margin"]),
            verdict=Verdict(data["verdict"]),
            seed=int(data["seed"]),
            t=float(data["t"]),
            s=float(data.get("s", 0.0)),
            p=data.get("p"),
            config_hash=data.get("config_hash", ""),
            details=data.get("details", {}),
        )


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    return value


def reports_to_json(reports: list[InequalityReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


def reports_from_json(text: str) -> list[InequalityReport]:
    return [InequalityReport.from_dict(row) for row in json.loads(text)]


def reports_to_frame(reports: list[InequalityReport]) -> pd.DataFrame:
    """Flat table with one row per report and the fixed report columns."""
    rows = []
    for report in reports:
        row = report.to_dict()
        rows.append({column: row[column] for column in REPORT_COLUMNS})
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_reports_csv(reports: list[InequalityReport], file: str | Path) -> Path:
    file = Path(file)
    reports_to_frame(reports).to_csv(file, index=False, float_format="%.17g")
    return file
