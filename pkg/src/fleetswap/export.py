"""Writers for run metrics: per-tick CSV, replacement log CSV and a JSON summary.

Numbers are written with fixed precision so that identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Dict, Iterable

from .engine import RunMetrics

TICK_HEADER = ("time_s", "robot_id", "role", "voltage_v", "discharge_mah", "x_m", "y_m")
REPLACEMENT_HEADER = (
    "time_s",
    "hub",
    "leaving",
    "entering",
    "remaining_fraction_at_swap",
    "entering_remaining_fraction",
    "duration_s",
)
TICKS_FILE = "ticks.csv"
REPLACEMENTS_FILE = "replacements.csv"
SUMMARY_FILE = "summary.json"


def _fmt(value: float, digits: int = 6) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.{digits}f}"


def write_ticks(metrics: RunMetrics, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TICK_HEADER)
        for t, rid, role, v, d, x, y in metrics.ticks:
            w.writerow((_fmt(t, 3), rid, role, _fmt(v), _fmt(d), _fmt(x), _fmt(y)))


def write_replacements(metrics: RunMetrics, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLACEMENT_HEADER)
        for r in metrics.replacements:
            w.writerow(
                (
                    _fmt(r.time_s, 3),
                    r.hub,
                    r.leaving,
                    r.entering,
                    _fmt(r.leaving_fraction),
                    _fmt(r.entering_fraction),
                    _fmt(r.duration_s, 3),
                )
            )


def _clean(value):
    if isinstance(value, float):
        return None if math.isnan(value) else round(value, 9)
    return value


def write_summary(metrics: RunMetrics, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({k: _clean(v) for k, v in metrics.summary.items()}, fh, indent=2)
        fh.write("\n")


def write_run(metrics: RunMetrics, out_dir: str) -> Dict[str, str]:
    """Write the three metric files into ``out_dir`` and return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "ticks": os.path.join(out_dir, TICKS_FILE),
        "replacements": os.path.join(out_dir, REPLACEMENTS_FILE),
        "summary": os.path.join(out_dir, SUMMARY_FILE),
    }
    write_ticks(metrics, paths["ticks"])
    write_replacements(metrics, paths["replacements"])
    write_summary(metrics, paths["summary"])
    return paths


def write_rows(path: str, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(tuple(header))
        w.writerows(rows)
