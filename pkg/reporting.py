#!/usr/bin/env python3
"""
Result writers for the command-line front end.
This module handles every file a command emits: CSV tables, JSON reports,
figures and the run manifest, plus the human-readable console summaries.
"""

import csv
import json
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from loguru import logger
from pydantic import BaseModel

from config import OUTPUT_CONFIG, TOOL_VERSION
from experiment import MCSummary, TrialResult
from lemma_verify import LemmaReport
from optimizers import Trajectory

# Column name -> value getter for the per-trial CSV
TRIAL_COLUMNS: Dict[str, Callable[[TrialResult], Any]] = {
    "trial": lambda r: r.index,
    "count_e1": lambda r: r.counts[0],
    "count_e2": lambda r: r.counts[1],
    "case": lambda r: r.case.value,
    "permutation": lambda r: " ".join(str(i) for i in r.permutation),
    "gf_loss": lambda r: r.gf_loss,
    "agd_loss": lambda r: r.agd_loss,
    "gf_full_loss": lambda r: r.gf_full_loss,
    "agd_full_loss": lambda r: r.agd_full_loss,
    "ratio": lambda r: r.ratio,
    "ratio_floor": lambda r: r.ratio_floor,
    "gf_stop_time": lambda r: r.gf_stop_time,
    "agd_stop_time": lambda r: r.agd_stop_time,
    "gf_lower_bound": lambda r: r.report.gf_lower_bound if r.report else None,
    "agd_upper_bound": lambda r: r.report.agd_upper_bound if r.report else None,
    "losses_equal": lambda r: r.losses_equal,
    "residuals_equal": lambda r: r.residuals_equal,
}


class RunManifest(BaseModel):
    """Record of one command invocation; written after every other output."""

    command: str
    config: Dict[str, Any]
    tool_version: str
    seed: Optional[int] = None
    outputs: List[str]
    duration_seconds: float


def format_value(value: Any) -> str:
    """CSV cell text; floats use the shortest representation that parses back exactly."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ReportWriter:
    """Writes a command's artifacts into one output directory and tracks them for the manifest."""

    def __init__(self, out_dir: Optional[str] = None):
        """Create the output directory (default from OUTPUT_CONFIG)."""
        self.out_dir = Path(out_dir or OUTPUT_CONFIG["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs: List[str] = []
        self.started = time.perf_counter()

    def _path(self, name: str) -> Path:
        path = self.out_dir / name
        self.outputs.append(name)
        logger.debug(f"Writing {path}")
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._path(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        path = self._path(name)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        return path

    def write_trials_csv(self, name: str, results: Sequence[TrialResult]) -> Path:
        rows = ([getter(r) for getter in TRIAL_COLUMNS.values()] for r in results)
        return self.write_csv(name, list(TRIAL_COLUMNS), rows)

    def write_trajectory_csv(self, name: str, trajectory: Trajectory) -> Path:
        """Columns: phase,time,delta_1..delta_d,train_loss,test_loss"""
        dim = len(trajectory.points[0].delta) if len(trajectory) else 0
        header = ["phase", "time"] + [f"delta_{i}" for i in range(1, dim + 1)] + ["train_loss", "test_loss"]
        rows = (
            [p.phase.value, p.time] + [float(x) for x in p.delta] + [p.train_loss, p.test_loss]
            for p in trajectory
        )
        return self.write_csv(name, header, rows)

    def write_trajectory_json(self, name: str, trajectory: Trajectory) -> Path:
        points = [
            {
                "phase": p.phase.value,
                "time": p.time,
                "delta": [float(x) for x in p.delta],
                "train_loss": p.train_loss,
                "test_loss": p.test_loss,
            }
            for p in trajectory
        ]
        return self.write_json(name, {"points": points})

    def write_figure(self, name: str, save: Callable[[Path], None]) -> Path:
        path = self._path(name)
        save(path)
        return path

    def write_manifest(self, command: str, config: Dict[str, Any], seed: Optional[int] = None) -> Path:
        """Write the run manifest; must be the last file a command emits."""
        name = OUTPUT_CONFIG["files"]["manifest"].format(command=command)
        manifest = RunManifest(
            command=command,
            config=config,
            tool_version=TOOL_VERSION,
            seed=seed,
            outputs=list(self.outputs) + [name],
            duration_seconds=round(time.perf_counter() - self.started, 6),
        )
        path = self._path(name)
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


def format_summary(summary: MCSummary, checks: Optional[Dict[str, bool]] = None) -> str:
    """Format a Monte Carlo summary into a readable block of text."""
    lines = [f"📊 {summary.trials} trial(s)"]
    lines.append(
        f"   🎲 Duplicated: {summary.duplicated_count} ({summary.duplicated_fraction:.4f}), "
        f"degenerate: {summary.degenerate_count}"
    )
    if summary.min_ratio_duplicated is not None:
        lines.append(
            f"   📈 GF/annealed loss ratio: min {summary.min_ratio_duplicated:.6f}, "
            f"mean {summary.mean_ratio_duplicated:.6f}"
        )
    else:
        lines.append("   📈 GF/annealed loss ratio: undefined (no duplicated trials)")
    if summary.degenerate_loss_equal_fraction is not None:
        lines.append(f"   ⚖️  Degenerate trials with equal losses: {summary.degenerate_loss_equal_fraction:.4f}")

    if checks:
        lines.append("")
        for name, ok in checks.items():
            lines.append(f"   {'✅' if ok else '❌'} {name}")
    return "\n".join(lines)


def format_lemma_report(report: LemmaReport) -> str:
    """Format a lemma report for the console."""
    marks = {"PASS": "✅", "FAIL": "❌", "SKIPPED": "⏭️ "}
    lines = [f"{marks[report.status]} Lemma {report.status} (k={report.setup.k}, p={report.setup.p:.6g})"]
    lines.append(f"   Condition 1: {report.condition1} (gamma_1 delta_1^2 = {report.condition1_value:.6g})")
    lines.append(f"   Condition 2: {report.condition2} (lhs = {report.condition2_lhs:.6g})")
    lines.append(f"   GF population loss {report.realized_gf_loss:.6g} >= {report.gf_lower_bound:.6g}")
    lines.append(f"   Annealed population loss {report.realized_agd_loss:.6g} <= {report.agd_upper_bound:.6g}")
    lines.append(f"   Stop time {report.stop_time:.6g} >= {report.stop_time_lower:.6g}")
    return "\n".join(lines)
