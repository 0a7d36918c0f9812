"""Report writers.

JSON: report.json, the full Report model. CSV: checks.csv plus one file per
result table, header row, '.' decimal separator, floats at 17 significant
digits. Wall-clock time goes to timing.json only.
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from models.schemas import Cell, CheckResult, Report, ResultTable

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CHECKS_FILE = "checks.csv"
TIMING_FILE = "timing.json"
CHECK_COLUMNS = ["name", "kind", "measured", "lower", "upper", "passed", "error_code", "message"]


def format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def table(name: str, columns: Sequence[str], rows: Iterable[Sequence[Cell]]) -> ResultTable:
    """ResultTable with numpy scalars converted to plain floats and ints."""
    def plain(cell):
        if hasattr(cell, "item"):
            cell = cell.item()
        return cell

    return ResultTable(name=name, columns=list(columns), rows=[[plain(c) for c in row] for row in rows])


def _check_row(check: CheckResult) -> List[Cell]:
    return [check.name, check.kind, check.measured, check.lower, check.upper, check.passed, check.error_code, check.message]


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Cell]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(c) for c in row])
    return path


class ReportWriter:
    """Writes a Report under <output_dir>/<experiment_id>/."""

    @staticmethod
    def run_directory(output_dir, experiment_id: str) -> Path:
        path = Path(output_dir) / experiment_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_json(report: Report, directory: Path) -> Path:
        path = directory / REPORT_FILE
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    @staticmethod
    def write_csv(report: Report, directory: Path) -> Path:
        path = write_csv(directory / CHECKS_FILE, CHECK_COLUMNS, (_check_row(c) for c in report.checks))
        for t in report.tables:
            write_csv(directory / f"{t.name}.csv", t.columns, t.rows)
        return path

    @staticmethod
    def write(report: Report, output_dir, fmt: str = "json") -> Path:
        """Write the report in fmt and return the main file path."""
        directory = ReportWriter.run_directory(output_dir, report.experiment_id)
        path = ReportWriter.write_csv(report, directory) if fmt == "csv" else ReportWriter.write_json(report, directory)
        logger.info(f"report written to {path}", extra={"experiment_id": report.experiment_id})
        return path

    @staticmethod
    def write_timing(directory: Path, seconds: float, per_check: Dict[str, float]) -> Path:
        path = directory / TIMING_FILE
        payload = {"wall_clock_seconds": seconds, "checks": per_check}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
