"""Tables, CSV files and plot data from grid results."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .evaluation import HARDWARE_REFERENCE, REPORT_COLUMNS, ErrorReport
from .flight_log import RESIDUAL_SUFFIXES, STREAMS, FlightLog

logger = logging.getLogger(__name__)

FORMATS = ("csv", "markdown", "plot-data")
CONTROLLER_ORDER = ("lee", "indi_pwm", "indi", "ilndi", "na_indi", "true")
TRAJECTORY_ORDER = ("circle", "figure8", "helix", "hover")
CRASHED_CELL = "--"


class ReportWriteError(OSError):
    """Raised when a report file cannot be written."""


def _ordered(values: Sequence[str], preferred: Sequence[str]) -> List[str]:
    unique = list(dict.fromkeys(values))
    known = [v for v in preferred if v in unique]
    return known + sorted(v for v in unique if v not in preferred)


def total_variation(trace: NDArray[np.float64]) -> float:
    """Sum of absolute sample-to-sample changes, summed over channels."""
    trace = np.asarray(trace, dtype=np.float64)
    if len(trace) < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(trace, axis=0))))


def error_trace(log: FlightLog) -> NDArray[np.float64]:
    """Per-tick distance between the tracked body and the reference."""
    return np.linalg.norm(log.tracked_position() - log.reference, axis=1)


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportWriteError(f"Cannot write report file {path}: {e}") from e
    return path


def _cell(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


def _markdown_table(header: List[str], rows: List[List[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def _as_frame(report: Union[ErrorReport, pd.DataFrame]) -> pd.DataFrame:
    return report.to_frame() if isinstance(report, ErrorReport) else report[REPORT_COLUMNS]


def render_markdown(report: Union[ErrorReport, pd.DataFrame]) -> str:
    """One table per payload mode: controllers as rows, trajectories as columns."""
    frame = _as_frame(report)
    lines = ["# Tracking error (m)", ""]
    for payload in sorted(frame["payload"].unique()):
        part = frame[frame["payload"] == payload]
        controllers = _ordered(part["controller"].tolist(), CONTROLLER_ORDER)
        trajectories = _ordered(part["trajectory"].tolist(), TRAJECTORY_ORDER)
        title = "With payload" if payload else "Without payload"

        rows = []
        for controller in controllers:
            row = [controller]
            for trajectory in trajectories:
                match = part[(part["controller"] == controller) & (part["trajectory"] == trajectory)]
                if match.empty:
                    row.append("")
                elif bool(match["crashed"].iloc[0]):
                    row.append(CRASHED_CELL)
                else:
                    row.append(_cell(match["mean_error"].iloc[0], match["std_error"].iloc[0]))
            rows.append(row)
        lines += [f"## {title}", ""] + _markdown_table(["controller"] + trajectories, rows) + [""]

        reference_rows = []
        for controller in controllers:
            if not any((controller, t, bool(payload)) in HARDWARE_REFERENCE for t in trajectories):
                continue
            row = [controller]
            for trajectory in trajectories:
                key = (controller, trajectory, bool(payload))
                if key not in HARDWARE_REFERENCE:
                    row.append("")
                else:
                    value = HARDWARE_REFERENCE[key]
                    row.append(CRASHED_CELL if value is None else _cell(*value))
            reference_rows.append(row)
        if reference_rows:
            lines += [
                f"### {title}: published hardware results (context only)",
                "",
            ] + _markdown_table(["controller"] + trajectories, reference_rows) + [""]
    return "\n".join(lines)


def trace_frame(log: FlightLog) -> pd.DataFrame:
    """Tracking error and every logged residual stream on the log's timebase."""
    blocks = {"t": log.time, "error": error_trace(log)}
    for stream in STREAMS:
        if stream in log.residuals:
            for suffix, values in zip(RESIDUAL_SUFFIXES, log.residuals[stream].T):
                blocks[f"{stream}_{suffix}"] = values
    return pd.DataFrame(blocks)


def _trace_name(log: FlightLog, index: int) -> str:
    meta = log.metadata
    parts = [str(meta.get("controller", "flight")), str(meta.get("trajectory", index))]
    if meta.get("payload"):
        parts.append("payload")
    parts.append(f"seed{meta.get('seed', index)}")
    return "trace_" + "_".join(parts) + ".csv"


def emit_report(
    report: Union[ErrorReport, pd.DataFrame],
    fmt: str,
    out_dir: Union[str, Path],
    logs: Optional[Sequence[FlightLog]] = None,
) -> List[Path]:
    """
    Write the report in one format.

    Args:
        report: Grid results, or a table read back with read_report_csv
        fmt: csv, markdown or plot-data
        out_dir: Directory that receives the files (created if missing)
        logs: Flight logs for plot-data traces

    Returns:
        Paths of the written files.
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format: {fmt}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(f"Cannot create report directory {out_dir}: {e}") from e

    written: List[Path] = []
    if fmt == "csv":
        path = out_dir / "report.csv"
        try:
            _as_frame(report).to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise ReportWriteError(f"Cannot write report file {path}: {e}") from e
        written.append(path)
    elif fmt == "markdown":
        written.append(_write(out_dir / "report.md", render_markdown(report)))
    else:
        if not logs:
            raise ValueError("plot-data needs at least one flight log")
        for i, log in enumerate(logs):
            path = out_dir / _trace_name(log, i)
            try:
                trace_frame(log).to_csv(path, index=False, float_format="%.17g")
            except OSError as e:
                raise ReportWriteError(f"Cannot write report file {path}: {e}") from e
            written.append(path)
    for path in written:
        logger.info(f"Report written to {path}")
    return written


def read_report_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a report written by emit_report(..., 'csv')."""
    frame = pd.read_csv(path)
    missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing report columns {missing}")
    return frame[REPORT_COLUMNS]
