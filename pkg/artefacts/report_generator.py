"""
Report and artefact generation module.

Writes the JSON reports, polyline CSVs, chart exports, a Markdown summary and
the session log of a run into one output directory.
"""
import json
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from config.settings import CONFIG
from core.chart import TubularChart
from core.tracing import Polyline, export_csv
from utils.logger import get_logger, LogEntry


@dataclass
class CheckRow:
    """One numerical identity check shown in the summary."""
    name: str
    value: float
    limit: float
    lower: bool = False  # value must stay above the limit

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.lower:
            return abs(self.value) >= self.limit
        return abs(self.value) <= self.limit

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit,
                "lower": self.lower, "passed": self.passed}


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent."""
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


class ReportWriter:
    """
    Writes the artefacts of one run.

    Every file written is recorded in `files`; `finish` saves the session log
    and reports the count.
    """

    def __init__(self, out_dir: Optional[Union[str, Path]] = None):
        """
        Initialize report writer.

        Args:
            out_dir: Output directory; defaults to CONFIG.get_output_dir()
        """
        self._logger = get_logger()
        self._out_dir = Path(out_dir) if out_dir else CONFIG.get_output_dir()
        self._out_dir.mkdir(parents=True, exist_ok=True)
        self.files: Dict[str, Path] = {}

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    def add_file(self, key: str, path: Path) -> Path:
        """Record a file written by someone else."""
        return self._record(key, Path(path))

    def _record(self, key: str, path: Path) -> Path:
        self.files[key] = path
        self._logger.debug("ReportWriter", f"wrote {path}")
        return path

    def write_json(self, name: str, command: str, config: dict, body: dict) -> Path:
        """
        Write `<name>.json` with the schema version, command and resolved config.

        Args:
            name: file stem
            command: command that produced the report
            config: resolved RunConfig as a dict
            body: report payload, merged at top level

        Returns:
            Path of the written file
        """
        payload = {"schema": CONFIG.REPORT_SCHEMA, "command": command, "config": config}
        payload.update(body)
        path = self._out_dir / f"{name}.json"
        path.write_text(dumps(payload), encoding='utf-8')
        return self._record(name, path)

    def write_polyline_csv(self, name: str, polyline: Polyline) -> Path:
        """Write a polyline with columns s, x, y, z."""
        return self._record(name, export_csv(polyline, self._out_dir / f"{name}.csv"))

    def write_chart(self, name: str, chart: TubularChart, stride: Optional[int] = None) -> Path:
        """Write the subsampled chart (curve, frame, Darboux coefficients)."""
        path = self._out_dir / f"{name}.json"
        payload = {"schema": CONFIG.REPORT_SCHEMA, "chart": chart.to_dict(stride)}
        path.write_text(dumps(payload), encoding='utf-8')
        return self._record(name, path)

    def write_markdown(self, command: str, rows: Sequence[tuple],
                       checks: Sequence[CheckRow] = (), notes: str = "") -> Path:
        """
        Write summary.md.

        Args:
            command: command name for the title
            rows: (label, value) pairs for the result table
            checks: identity checks with their limits
            notes: free text appended at the end

        Returns:
            Path of the summary
        """
        content = f"# planefold {command} report\n\n## Result\n\n| Quantity | Value |\n|----------|-------|\n"
        for label, value in rows:
            content += f"| {label} | {value} |\n"

        if checks:
            failed = sum(1 for c in checks if not c.passed)
            content += "\n## Checks\n\n"
            content += f"- **Status**: {'all passed' if not failed else f'{failed} failed'}\n\n"
            content += "| Check | Value | Limit | Result |\n"
            content += "|-------|-------|-------|--------|\n"
            for check in checks:
                result = "pass" if check.passed else "FAIL"
                content += f"| {check.name} | {check.value:.3e} | {check.limit:.0e} | {result} |\n"

        if notes:
            content += f"\n## Notes\n\n{notes}\n"

        content += f"\n---\n*Generated by {CONFIG.APP_NAME} v{CONFIG.VERSION}*\n"
        path = self._out_dir / "summary.md"
        path.write_text(content, encoding='utf-8')
        return self._record("summary", path)

    def save_session_log(self, entries: List[LogEntry]) -> Path:
        """Save log entries to the session log."""
        path = self._out_dir / CONFIG.LOG_FILE_NAME
        with open(path, 'w', encoding='utf-8') as f:
            f.write(f"# Session Log - {datetime.now().isoformat()}\n")
            f.write("-" * 60 + "\n\n")
            for entry in entries:
                f.write(entry.format() + "\n")
        return self._record("log", path)

    def finish(self) -> Dict[str, Path]:
        """Save the session log and return every file written."""
        self.save_session_log(self._logger.get_entries())
        self._logger.info("ReportWriter", f"Generated {len(self.files)} artefact files in {self._out_dir}")
        return dict(self.files)
