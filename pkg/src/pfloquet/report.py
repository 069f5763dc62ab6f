"""JSON summaries and CSV traces of experiment runs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SUMMARY_NAME = "summary.json"


@dataclass
class Check:
    name: str
    passed: bool
    margin: float

    def as_dict(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "margin": _json_number(self.margin)}


@dataclass
class RunResults:
    """Everything a subcommand reports; ``None`` fields are left out of the JSON.

    ``tables`` maps a CSV file name to ``(header, rows)``.
    """

    system: str
    omega_seed: int
    lambda1: float | None = None
    lambda1_adjoint: float | None = None
    lambda2: float | None = None
    sigma: float | None = None
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def add_check(self, name: str, passed: bool, margin: float) -> None:
        self.checks.append(Check(name, bool(passed), float(margin)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def _json_number(value):
    if value is None:
        return None
    value = float(value)
    if math.isfinite(value):
        return value
    return "inf" if value > 0 else ("-inf" if value < 0 else "nan")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _json_number(value)
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def summary_dict(results: RunResults, trace_files: Sequence[str], timestamp: str | None = None) -> dict:
    out = {"system": results.system, "omega_seed": int(results.omega_seed)}
    for key in ("lambda1", "lambda1_adjoint", "lambda2", "sigma"):
        value = getattr(results, key)
        if value is not None:
            out[key] = _json_number(value)
    out["checks"] = [c.as_dict() for c in results.checks]
    out["failing"] = results.failing()
    out["traces"] = list(trace_files)
    for key, value in results.extras.items():
        out[key] = _jsonable(value)
    out["generated_at"] = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return out


def emit_report(results: RunResults, directory, write_traces: bool = True, timestamp: str | None = None) -> Path:
    """Write CSV traces (unless disabled) and the JSON summary; return the summary path.

    ``results.tables`` maps a file name to ``(header, rows)``.  Raises OSError
    when the directory or a file cannot be written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    trace_files = []
    if write_traces:
        for name, (header, rows) in results.tables.items():
            write_csv(directory / name, header, rows)
            trace_files.append(name)
    summary = summary_dict(results, trace_files, timestamp)
    path = directory / SUMMARY_NAME
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(summary, handle, indent=2, allow_nan=False, ensure_ascii=False)
        handle.write("\n")
    return path
