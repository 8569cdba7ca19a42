"""Sweeps over payload mass, policy and seed with plot-ready aggregate CSVs.

Cells are independent simulations. They may run in a process pool, but the
aggregates are always assembled in the fixed cell order (mass, then policy,
then seed) so repeated campaigns write identical files.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from . import config as cfgmod
from .config import ConfigError, WorldConfig
from .engine import run
from .export import _fmt, write_rows, write_run

log = logging.getLogger(__name__)

DEFAULT_MAX_CELLS = 1000
HIST_BINS = 10


@dataclass(frozen=True)
class Campaign:
    base: WorldConfig
    payload_masses: Tuple[float, ...]
    policies: Tuple[str, ...]
    seeds: Tuple[int, ...]
    max_cells: int = DEFAULT_MAX_CELLS
    per_run_outputs: bool = True

    def __post_init__(self):
        if not self.payload_masses or not self.policies or not self.seeds:
            raise ConfigError("campaign axes must be non-empty")
        if self.n_cells > self.max_cells:
            raise ConfigError(f"campaign has {self.n_cells} cells, above the cap of {self.max_cells}")
        for label in self.policies:
            cfgmod.parse_policy_label(label)

    @property
    def n_cells(self) -> int:
        return len(self.payload_masses) * len(self.policies) * len(self.seeds)

    def cells(self) -> List[Tuple[float, str, int, WorldConfig]]:
        out = []
        for mass in self.payload_masses:
            for label in self.policies:
                for seed in self.seeds:
                    cfg = cfgmod.apply_overrides(self.base, payload_mass_kg=float(mass), policy=label, seed=int(seed))
                    out.append((float(mass), label, int(seed), cfg))
        return out


def load_campaign(path: str, base_dir: Optional[str] = None) -> Campaign:
    """Read a campaign document; ``base`` is an inline config mapping or a path."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"campaign is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("campaign document must be a mapping")
    known = {"base", "payload_masses", "policies", "seeds", "max_cells", "per_run_outputs"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown campaign fields: {sorted(unknown)}")
    base = data.get("base", {})
    if isinstance(base, str):
        root = base_dir if base_dir is not None else os.path.dirname(os.path.abspath(path))
        base_cfg = cfgmod.load(os.path.join(root, base))
    else:
        base_cfg = cfgmod.from_record(base)
    return Campaign(
        base_cfg,
        tuple(float(m) for m in data.get("payload_masses", [base_cfg.payload_mass_kg])),
        tuple(str(p) for p in data.get("policies", [base_cfg.policy.label])),
        tuple(int(s) for s in data.get("seeds", [base_cfg.seed])),
        int(data.get("max_cells", DEFAULT_MAX_CELLS)),
        bool(data.get("per_run_outputs", True)),
    )


def cell_name(mass: float, policy: str, seed: int) -> str:
    return f"m{mass:g}_{policy}_s{seed}"


def _run_cell(args: Tuple[WorldConfig, Optional[str]]) -> Dict[str, Any]:
    cfg, out_dir = args
    metrics = run(cfg)
    if out_dir is not None:
        write_run(metrics, out_dir)
    return {
        "summary": metrics.summary,
        "swap_fractions": [r.leaving_fraction for r in metrics.replacements],
        "hub_profile": metrics.hub_profile,
        "fleet_ids": [e.id for e in cfg.fleet],
    }


def run_campaign(campaign: Campaign, out_dir: str, jobs: int = 1) -> List[Dict[str, Any]]:
    """Run every cell and write aggregates into ``out_dir``; returns per-cell results."""
    os.makedirs(out_dir, exist_ok=True)
    cells = campaign.cells()
    tasks = []
    for mass, label, seed, cfg in cells:
        run_dir = os.path.join(out_dir, "runs", cell_name(mass, label, seed)) if campaign.per_run_outputs else None
        tasks.append((cfg, run_dir))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    for (mass, label, seed, _), res in zip(cells, results):
        res.update({"payload_mass_kg": mass, "policy": label, "seed": seed})
        log.info("cell %s done: %s", cell_name(mass, label, seed), res["summary"]["termination_reason"])
    write_aggregates(campaign, results, out_dir)
    return results


def _stats(values: Sequence[float]) -> Tuple[str, str, str, str]:
    mean = statistics.fmean(values)
    std = statistics.pstdev(values) if len(values) > 1 else 0.0
    return _fmt(mean, 3), _fmt(std, 3), _fmt(min(values), 3), _fmt(max(values), 3)


def write_aggregates(campaign: Campaign, results: List[Dict[str, Any]], out_dir: str) -> None:
    groups: Dict[Tuple[float, str], List[Dict[str, Any]]] = {}
    for res in results:
        groups.setdefault((res["payload_mass_kg"], res["policy"]), []).append(res)
    keys = [(m, p) for m in campaign.payload_masses for p in campaign.policies]

    op_rows, count_rows, hist_rows = [], [], []
    for mass, label in keys:
        group = groups[(float(mass), label)]
        op = [r["summary"]["operational_time_s"] for r in group]
        counts = [r["summary"]["replacement_count"] for r in group]
        op_rows.append((f"{mass:g}", label, len(group)) + _stats(op))
        count_rows.append((f"{mass:g}", label, len(group)) + _stats(counts))
        bins = [0] * HIST_BINS
        for r in group:
            for frac in r["swap_fractions"]:
                idx = min(max(int(frac * HIST_BINS), 0), HIST_BINS - 1)
                bins[idx] += 1
        for b, n in enumerate(bins):
            hist_rows.append((f"{mass:g}", label, b * 100 // HIST_BINS, (b + 1) * 100 // HIST_BINS, n))
    write_rows(
        os.path.join(out_dir, "operating_time.csv"),
        ("payload_mass_kg", "policy", "runs", "mean_operational_time_s", "std_s", "min_s", "max_s"),
        op_rows,
    )
    write_rows(
        os.path.join(out_dir, "replacement_counts.csv"),
        ("payload_mass_kg", "policy", "runs", "mean_replacements", "std", "min", "max"),
        count_rows,
    )
    write_rows(
        os.path.join(out_dir, "replacement_histogram.csv"),
        ("payload_mass_kg", "policy", "bin_lo_pct", "bin_hi_pct", "count"),
        hist_rows,
    )

    profile_rows = []
    run_rows = []
    for res in results:
        mass, label, seed = f"{res['payload_mass_kg']:g}", res["policy"], res["seed"]
        for event, t, hub, fracs in res["hub_profile"]:
            for rid, frac in zip(res["fleet_ids"], fracs):
                profile_rows.append((mass, label, seed, event, _fmt(t, 3), hub, rid, _fmt(frac)))
        s = res["summary"]
        run_rows.append(
            (
                mass,
                label,
                seed,
                _fmt(s["operational_time_s"], 3),
                _fmt(s["distance_m"], 3),
                s["replacement_count"],
                _fmt(s["waiting_time_s"], 3),
                s["termination_reason"],
                s["min_supporters"],
                s["conservation_violations"],
                s["separation_violations"],
                _fmt(s["max_swap_duration_error_s"], 3),
            )
        )
    write_rows(
        os.path.join(out_dir, "battery_profiles.csv"),
        ("payload_mass_kg", "policy", "seed", "hub_event", "time_s", "hub", "robot_id", "remaining_fraction"),
        profile_rows,
    )
    write_rows(
        os.path.join(out_dir, "runs.csv"),
        (
            "payload_mass_kg",
            "policy",
            "seed",
            "operational_time_s",
            "distance_m",
            "replacement_count",
            "waiting_time_s",
            "termination_reason",
            "min_supporters",
            "conservation_violations",
            "separation_violations",
            "max_swap_duration_error_s",
        ),
        run_rows,
    )


def campaign_from_config(base: WorldConfig, **axes: Any) -> Campaign:
    return dataclasses.replace(Campaign(base, (base.payload_mass_kg,), (base.policy.label,), (base.seed,)), **axes)
