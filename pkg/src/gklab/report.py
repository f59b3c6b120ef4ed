"""Scenario reports and their on-disk form.

A run writes ``report.json`` (sorted keys, UTF-8, no timing), one
``<table>.csv`` per table (RFC 4180) and ``timing.json``.  Wall-clock times
live only in the last file so that identical runs give identical reports.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Check", "Table", "ScenarioReport", "emit_report", "REPORT_FILE", "TIMING_FILE"]

REPORT_FILE = "report.json"
TIMING_FILE = "timing.json"


def _plain(x):
    """JSON-safe scalars: numpy types unwrapped, non-finite floats become strings."""
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    return x


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None

    def as_dict(self):
        return _plain({"name": self.name, "passed": self.passed, "value": self.value,
                       "threshold": self.threshold})


@dataclass
class Table:
    columns: list
    rows: list

    def as_dict(self):
        return {"columns": list(self.columns), "rows": _plain(self.rows)}


@dataclass
class ScenarioReport:
    scenario: str
    version: str
    config: dict
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def check(self, name: str, passed, value=None, threshold=None) -> bool:
        self.checks.append(Check(name, bool(passed), value, threshold))
        return bool(passed)

    def table(self, name: str, columns, rows) -> None:
        if name in self.tables:
            raise ValueError(f"duplicate table {name!r}")
        self.tables[name] = Table(list(columns), [list(r) for r in rows])

    def value(self, name: str, v) -> None:
        self.values[name] = v

    def timed(self, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        finally:
            self.timing["wall_seconds"] = time.perf_counter() - t0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "tool_version": self.version,
            "config": _plain(self.config),
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "tables": {k: t.as_dict() for k, t in self.tables.items()},
            "values": _plain(self.values),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, ensure_ascii=False,
                          allow_nan=False) + "\n"


def emit_report(report: ScenarioReport, path) -> list[Path]:
    """Write the report files into directory ``path``; returns the written paths."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / REPORT_FILE
    p.write_text(report.to_json(), encoding="utf-8")
    written.append(p)
    for name, t in sorted(report.tables.items()):
        p = out / f"{name}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
            w.writerow(t.columns)
            for row in t.as_dict()["rows"]:
                w.writerow(row)
        written.append(p)
    p = out / TIMING_FILE
    p.write_text(json.dumps(_plain(report.timing), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(p)
    return written
