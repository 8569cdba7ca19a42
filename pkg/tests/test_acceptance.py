"""Acceptance suite: one test per headline criterion.

Each test reports its verdict through the ``criterion`` fixture, which feeds
the pass/fail table printed at the end of the pytest run. The two simulation
campaigns run once per module and are shared between criteria.
"""

import dataclasses
import itertools
import math
import os
import statistics
import time

import numpy as np
import pytest

from _instances import random_feasible_problem, random_problem, random_sequence
from fleetswap import config as cfgmod
from fleetswap.battery import BatteryParams, voltage_curve
from fleetswap.campaign import load_campaign, run_campaign
from fleetswap.cli import EXIT_OK, main
from fleetswap.drivetrain import BodyVelocity, Pose, RobotParams, integrate_kinematics
from fleetswap.formation import (
    CircleTrajectory,
    ControlGains,
    ControllerState,
    follower_command,
    leader_command,
    slot_error,
    slot_world_target,
    square_slots,
)
from fleetswap.scheduler import build_qp, feasible, flatten, objective_value, solve

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
POLICIES = ("none", "baseline40", "baseline30", "optimized")


def _campaign(name, tmp_path_factory):
    camp = load_campaign(os.path.join(CONFIGS, name))
    out = tmp_path_factory.mktemp(name.split(".")[0])
    start = time.perf_counter()
    results = run_campaign(camp, str(out))
    return camp, results, time.perf_counter() - start


@pytest.fixture(scope="module")
def fleet12(tmp_path_factory):
    camp, results, elapsed = _campaign("fleet12_campaign.yaml", tmp_path_factory)
    by_policy = {p: sorted((r for r in results if r["policy"] == p), key=lambda r: r["seed"]) for p in camp.policies}
    return camp, by_policy, elapsed


@pytest.fixture(scope="module")
def mass_sweep(tmp_path_factory):
    return _campaign("mass_sweep.yaml", tmp_path_factory)


def _brute_force_optimum(p):
    """Exhaustive minimum with feasibility and objective re-derived from the model definition."""
    n, k, f = p.n_robots, p.horizon_k, p.formation_size_f
    subsets = []
    for active in itertools.combinations(range(n), f):
        x = [0] * n
        for i in active:
            x[i] = 1
        subsets.append(x)
    best = math.inf
    for seq in itertools.product(subsets, repeat=k):
        ok = True
        prev = list(p.x0)
        for j, x in enumerate(seq, start=1):
            d = [p.d0[i] + sum(p.r_d if seq[m][i] else p.r_c for m in range(j)) for i in range(n)]
            if any(x[i] and max(d[i], 0.0) > p.d_th for i in range(n)):
                ok = False
            if any(x[i] and not prev[i] and not p.hub_presence[j - 1][i] for i in range(n)):
                ok = False
            prev = x
        if not ok:
            continue
        d_k = [p.d0[i] + sum(p.r_d if seq[m][i] else p.r_c for m in range(k)) for i in range(n)]
        chain = [list(p.x0)] + [list(x) for x in seq]
        retained = sum(a * b for j in range(1, k + 1) for a, b in zip(chain[j], chain[j - 1]))
        best = min(best, p.w1 * sum(a * b for a, b in zip(d_k, seq[-1])) - p.w2 * retained)
    return best


def _direct_objective(p, seq):
    k = p.horizon_k
    d_k = [p.d0[i] + sum(p.r_d if seq[m][i] else p.r_c for m in range(k)) for i in range(p.n_robots)]
    chain = [p.x0] + list(seq)
    retained = sum(a * b for j in range(1, k + 1) for a, b in zip(chain[j], chain[j - 1]))
    return p.w1 * sum(a * b for a, b in zip(d_k, seq[-1])) - p.w2 * retained


class TestAcceptance:
    def test_c01_battery_curve_anchor(self, criterion):
        start = time.perf_counter()
        params = BatteryParams()
        at_zero = voltage_curve(params, 0.0)
        values = np.array([voltage_curve(params, float(d)) for d in range(0, 1201)])
        elapsed = time.perf_counter() - start
        ok = at_zero == 12.0 and bool(np.all(np.isfinite(values))) and bool(np.all(values > 0.0)) and elapsed < 1.0
        criterion(1, ok, f"V(0)={at_zero!r}, range [{values.min():.4f}, {values.max():.4f}] V over 0..1200 mAh, {elapsed:.3f}s")

    def test_c02_mass_endurance_monotone(self, mass_sweep, criterion):
        camp, results, elapsed = mass_sweep
        masses = sorted(camp.payload_masses)
        per_seed = {}
        for r in results:
            assert r["summary"]["termination_reason"] == "cutoff"
            per_seed.setdefault(r["seed"], {})[r["payload_mass_kg"]] = r["summary"]["first_cutoff_time_s"]
        monotone = all(all(t[a] > t[b] for a, b in zip(masses, masses[1:])) for t in per_seed.values())
        means = {m: statistics.fmean(t[m] for t in per_seed.values()) for m in masses}
        shown = ", ".join(f"{m:g} kg {means[m]:.1f}s" for m in masses)
        ok = monotone and len(per_seed) >= 5 and elapsed < 60.0
        criterion(2, ok, f"mean time to cutoff {shown}; strictly decreasing on {len(per_seed)} seeds={monotone}; {elapsed:.0f}s")

    def test_c03_policy_ordering(self, fleet12, criterion):
        camp, by_policy, elapsed = fleet12
        op = {p: statistics.fmean(r["summary"]["operational_time_s"] for r in by_policy[p]) for p in POLICIES}
        ratio = op["optimized"] / op["none"]
        ordered = op["none"] < op["baseline40"] <= op["baseline30"] < op["optimized"]
        ok = ordered and ratio >= 1.5 and len(camp.seeds) >= 5 and elapsed < 300.0
        shown = ", ".join(f"{p} {op[p]:.0f}s" for p in POLICIES)
        criterion(3, ok, f"mean operational time {shown}; optimized/none {ratio:.2f}; {elapsed:.0f}s")

    def test_c04_replacement_counts(self, fleet12, criterion):
        _, by_policy, _ = fleet12
        counts = {p: [r["summary"]["replacement_count"] for r in by_policy[p]] for p in POLICIES}
        per_seed = all(a <= b for a, b in zip(counts["baseline30"], counts["baseline40"]))
        mean_opt, mean_b30 = statistics.fmean(counts["optimized"]), statistics.fmean(counts["baseline30"])
        ok = per_seed and mean_opt >= mean_b30
        criterion(
            4,
            ok,
            f"baseline30 {counts['baseline30']} <= baseline40 {counts['baseline40']} per seed={per_seed}; "
            f"optimized mean {mean_opt:.1f} >= baseline30 mean {mean_b30:.1f}",
        )

    def test_c05_swap_charge_distribution(self, fleet12, criterion):
        _, by_policy, _ = fleet12
        b30 = [f for r in by_policy["baseline30"] for f in r["swap_fractions"]]
        opt = [f for r in by_policy["optimized"] for f in r["swap_fractions"]]
        ok = bool(b30) and max(b30) <= 0.31 and bool(opt) and max(opt) > 0.5
        criterion(
            5,
            ok,
            f"baseline30 max leaving fraction {max(b30, default=float('nan')):.3f} (<= 0.31); "
            f"optimized max {max(opt, default=float('nan')):.3f} (> 0.5)",
        )

    def test_c06_solver_exactness(self, criterion):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        mismatches = infeasible = 0
        for _ in range(100):
            p, _ = random_feasible_problem(rng)
            sol = solve(p)
            mismatches += sol.objective_value != _brute_force_optimum(p)
            infeasible += not feasible(p, sol.x)
        elapsed = time.perf_counter() - start
        ok = mismatches == 0 and infeasible == 0 and elapsed < 30.0
        criterion(6, ok, f"100 instances: {mismatches} objective mismatches, {infeasible} infeasible answers, {elapsed:.1f}s")

    def test_c07_encoding_soundness(self, criterion):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            p = random_problem(rng)
            seq = random_sequence(rng, p.n_robots, p.horizon_k)
            P, Q = build_qp(p)
            got, want = objective_value(P, Q, flatten(seq)), _direct_objective(p, seq)
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        criterion(7, worst <= 1e-9, f"1000 sequences, worst relative gap {worst:.2e} (no constants dropped)")

    def test_c08_worked_example(self, capsys, criterion):
        code = main(["solve", os.path.join(CONFIGS, "worked_example_problem.json")])
        last = capsys.readouterr().out.strip().splitlines()[-1]
        criterion(8, code == EXIT_OK and last == "leaving: [1] entering: [2]", f"exit {code}, '{last}'")

    def test_c09_formation_convergence(self, criterion):
        gains, robot, traj, dt = ControlGains(), RobotParams(), CircleTrajectory(), 0.1
        steps = int(round(120.0 / dt))
        d = gains.center_offset_d_m
        worst_final, slowest, equilibrium_ok = 0.0, 0.0, True
        for slot in square_slots():
            for radius in (0.1, 0.2, 0.3):
                for angle in range(0, 360, 45):
                    leader, _ = leader_command(0.0, traj)
                    target = slot_world_target(leader, slot)
                    a = math.radians(angle)
                    follower = Pose(
                        target.x + radius * math.cos(a) - d * math.cos(leader.theta),
                        target.y + radius * math.sin(a) - d * math.sin(leader.theta),
                        leader.theta,
                    )
                    ctrl, entered = ControllerState(), None
                    for i in range(steps + 1):
                        leader, vel = leader_command(i * dt, traj)
                        err = slot_error(leader, follower, slot, gains)
                        if err < 0.1 and entered is None:
                            entered = i * dt
                        elif err >= 0.1:
                            entered = None
                        cmd, ctrl = follower_command(leader, vel, follower, slot, gains, ctrl, dt, robot.max_speed_mps, robot.max_turn_rate_rps)
                        follower = integrate_kinematics(follower, cmd, robot, dt)
                    worst_final = max(worst_final, err)
                    slowest = max(slowest, math.inf if entered is None else entered)
            leader = Pose(0.4, -0.1, 0.7)
            target = slot_world_target(leader, slot)
            still = Pose(target.x - d * math.cos(0.7), target.y - d * math.sin(0.7), 0.7)
            cmd, ctrl = follower_command(leader, BodyVelocity(0.0, 0.0), still, slot, gains, ControllerState(), dt)
            equilibrium_ok &= abs(cmd.v) <= 1e-15 and abs(cmd.w) <= 1e-15 and max(map(abs, ctrl)) <= 1e-15
        ok = worst_final < 0.1 and slowest <= 120.0 and equilibrium_ok
        criterion(
            9,
            ok,
            f"96 rollouts, 4 slots: error < 0.1 m from {slowest:.1f}s on, worst at 120s {worst_final:.4f} m; zero equilibrium={equilibrium_ok}",
        )

    def test_c10_replacement_safety(self, fleet12, mass_sweep, criterion):
        _, by_policy, _ = fleet12
        runs = [r for p in POLICIES for r in by_policy[p]] + list(mass_sweep[1])
        dt = cfgmod.load(os.path.join(CONFIGS, "fleet12.yaml")).dt
        short = [r for r in runs if r["summary"]["min_supporters"] < r["summary"]["formation_size"]]
        leaks = sum(r["summary"]["conservation_violations"] for r in runs)
        worst = max(r["summary"]["max_swap_duration_error_s"] for r in runs)
        swaps = sum(r["summary"]["replacement_count"] for r in runs)
        ok = not short and leaks == 0 and worst <= dt + 1e-9
        criterion(
            10,
            ok,
            f"{len(runs)} runs, {swaps} swaps: {len(short)} runs below F supporters, {leaks} conservation violations, "
            f"worst swap duration error {worst:.3f}s",
        )

    def test_c11_determinism(self, tmp_path, criterion):
        cfg = cfgmod.apply_overrides(cfgmod.load(os.path.join(CONFIGS, "default.yaml")), seed=3)
        path = tmp_path / "world.yaml"
        cfgmod.dump(dataclasses.replace(cfg, max_sim_time_s=1800.0), path)
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(path), "--out", str(first)]) == EXIT_OK
        assert main(["run", "--config", str(path), "--out", str(second)]) == EXIT_OK
        a, b = (first / "ticks.csv").read_bytes(), (second / "ticks.csv").read_bytes()
        criterion(11, a == b and len(a) > 0, f"two runs of the same config and seed: ticks.csv {len(a)} bytes, identical={a == b}")
