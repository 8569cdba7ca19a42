"""Command-line front end: ``run``, ``campaign``, ``solve`` and ``calibrate``.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
one-shot solve is infeasible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import List, Optional

from . import config as cfgmod
from .battery import BatteryParams
from .calibration import (
    TARGET_CUTOFF_V,
    TARGET_DURATION_S,
    TARGET_FORMATION_SIZE,
    TARGET_PAYLOAD_KG,
    calibrate_rolling_resistance,
)
from .campaign import load_campaign, run_campaign
from .config import ConfigError
from .drivetrain import RobotParams
from .engine import run
from .export import write_run
from .scheduler import Infeasible, load_problem, solution_to_record, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("fleetswap")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging() -> None:
    name = os.environ.get("FLEET_LOG_LEVEL", "warn").strip().lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if name not in LOG_LEVELS:
        log.warning("unknown FLEET_LOG_LEVEL %r, using warn", name)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--payload-mass", type=float, dest="payload_mass", help="override the payload mass (kg)")
    p.add_argument("--policy", help="none, optimized or baseline<percent> such as baseline30")
    p.add_argument("--horizon-k", type=int, dest="horizon_k", help="override the scheduling horizon")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fleetswap", description="Robot replacement simulator for multi-robot payload transport.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="simulate one configuration")
    p_run.add_argument("--config", help="YAML world config (built-in defaults when omitted)")
    p_run.add_argument("--out", required=True, help="directory for ticks.csv, replacements.csv and summary.json")
    _add_overrides(p_run)

    p_camp = sub.add_parser("campaign", help="sweep payload mass, policy and seed")
    p_camp.add_argument("--config", required=True, help="YAML campaign document")
    p_camp.add_argument("--out", required=True, help="output directory for aggregate CSVs")
    p_camp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_overrides(p_camp)

    p_solve = sub.add_parser("solve", help="solve one serialized scheduling problem")
    p_solve.add_argument("problem", help="JSON problem record")
    p_solve.add_argument("--horizon-k", type=int, dest="horizon_k", help=argparse.SUPPRESS)

    p_cal = sub.add_parser("calibrate", help="suggest a rolling-resistance coefficient")
    p_cal.add_argument("--config", help="YAML world config supplying robot and battery parameters")
    p_cal.add_argument("--payload-mass", type=float, dest="payload_mass", default=TARGET_PAYLOAD_KG)
    p_cal.add_argument("--formation-size", type=int, default=TARGET_FORMATION_SIZE)
    p_cal.add_argument("--target-s", type=float, default=TARGET_DURATION_S, help="seconds until the cutoff voltage")
    p_cal.add_argument("--cutoff-v", type=float, default=TARGET_CUTOFF_V)
    return parser


def _load_world(path: Optional[str]) -> cfgmod.WorldConfig:
    if path is None:
        return cfgmod.default_config()
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    return cfgmod.load(path)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_world(args.config)
    cfg = cfgmod.apply_overrides(
        cfg, seed=args.seed, payload_mass_kg=args.payload_mass, policy=args.policy, horizon_k=args.horizon_k
    )
    metrics = run(cfg)
    paths = write_run(metrics, args.out)
    s = metrics.summary
    print(
        f"{s['policy']} payload={s['payload_mass_kg']:g} kg seed={s['seed']}: "
        f"operational {s['operational_time_s']:.1f} s, {s['replacement_count']} replacements, "
        f"ended by {s['termination_reason']}"
    )
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return EXIT_OK


def cmd_campaign(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.config):
        raise ConfigError(f"campaign file not found: {args.config}")
    camp = load_campaign(args.config)
    base = cfgmod.apply_overrides(camp.base, horizon_k=args.horizon_k)
    axes = {"base": base}
    if args.payload_mass is not None:
        axes["payload_masses"] = (args.payload_mass,)
    if args.policy is not None:
        axes["policies"] = (args.policy,)
    if args.seed is not None:
        axes["seeds"] = (args.seed,)
    camp = dataclasses.replace(camp, **axes)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    results = run_campaign(camp, args.out, jobs=args.jobs)
    print(f"{len(results)} runs aggregated into {args.out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.problem):
        raise ConfigError(f"problem file not found: {args.problem}")
    try:
        problem = load_problem(args.problem)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc
    if args.horizon_k is not None and args.horizon_k != problem.horizon_k:
        raise ConfigError("--horizon-k must match the problem's hub_presence length")
    try:
        solution = solve(problem)
    except Infeasible:
        print("waiting for replacement")
        return EXIT_INFEASIBLE
    record = solution_to_record(problem, solution)
    print(json.dumps(record, indent=2))
    order = record["order"]
    print(f"leaving: {order['leaving']} entering: {order['entering']}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    if args.config:
        cfg = _load_world(args.config)
        robot, battery = cfg.fleet[0].robot, cfg.fleet[0].battery
    else:
        robot, battery = RobotParams(), BatteryParams()
    res = calibrate_rolling_resistance(
        robot, battery, args.formation_size, args.payload_mass, args.target_s, args.cutoff_v
    )
    print(f"suggested rolling_resist_coeff: {res.rolling_resist_coeff}")
    print(f"  time to {args.cutoff_v} V with {args.payload_mass:g} kg over {args.formation_size} robots: {res.achieved_s:.0f} s")
    print(f"  time to {args.cutoff_v} V without payload: {res.no_payload_s:.0f} s")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "campaign": cmd_campaign, "solve": cmd_solve, "calibrate": cmd_calibrate}


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
