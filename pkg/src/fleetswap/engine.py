"""Tick-driven world simulation with hub scheduling and the replacement cycle.

While transporting, the leader tracks the reference loop and every follower
runs the formation law; each formation robot's battery is drained by the
power its drivetrain needs. Hub residents charge. When the leader enters a
hub's trigger circle the selected policy is consulted and any replacement
order is executed one swap at a time with the formation halted.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .battery import (
    BatteryDepleted,
    BatteryParams,
    BatteryState,
    charge_step,
    discharge_at_voltage,
    discharge_step,
    full_state,
)
from .config import HubConfig, WorldConfig
from .drivetrain import (
    BodyVelocity,
    Pose,
    RobotParams,
    clamp_velocity,
    drive_power,
    electrical_power,
    integrate_kinematics,
    required_torques,
    wheel_speeds,
)
from .formation import (
    ControllerState,
    FormationSlot,
    follower_command,
    leader_command,
    leader_tracking_command,
    min_separation,
    min_separation_ok,
    slot_world_target,
)
from .scheduler import (
    Infeasible,
    ReplacementOrder,
    ScheduleProblem,
    baseline_policy,
    diff_solutions,
    solve,
)

log = logging.getLogger(__name__)

# share of the swap budget reserved for the six piston phases when navigation is long
MIN_PISTON_SHARE = 0.2
SUPPORT_STANDOFF_M = 0.3


class Phase(enum.Enum):
    TRANSPORTING = "Transporting"
    SCHEDULING = "Scheduling"
    PISTONS_UP = "PistonsUp"
    SUPPORT_JOINING = "SupportJoining"
    SUPPORT_UP = "SupportUp"
    LEAVER_DOWN = "LeaverDown"
    LEAVER_EXIT = "LeaverExit"
    ENTRANT_JOIN = "EntrantJoin"
    ENTRANT_UP = "EntrantUp"
    SUPPORT_DOWN = "SupportDown"
    SUPPORT_EXIT = "SupportExit"
    PISTONS_DOWN = "PistonsDown"
    WAITING = "Waiting"


SWAP_CYCLE = (
    Phase.PISTONS_UP,
    Phase.SUPPORT_JOINING,
    Phase.SUPPORT_UP,
    Phase.LEAVER_DOWN,
    Phase.LEAVER_EXIT,
    Phase.ENTRANT_JOIN,
    Phase.ENTRANT_UP,
    Phase.SUPPORT_DOWN,
    Phase.SUPPORT_EXIT,
    Phase.PISTONS_DOWN,
)
PISTON_PHASES = frozenset(
    {Phase.PISTONS_UP, Phase.SUPPORT_UP, Phase.LEAVER_DOWN, Phase.ENTRANT_UP, Phase.SUPPORT_DOWN, Phase.PISTONS_DOWN}
)

LEGAL_TRANSITIONS: Dict[Phase, frozenset] = {
    Phase.TRANSPORTING: frozenset({Phase.SCHEDULING}),
    Phase.SCHEDULING: frozenset({Phase.TRANSPORTING, Phase.PISTONS_UP, Phase.WAITING}),
    Phase.WAITING: frozenset({Phase.SCHEDULING}),
    Phase.PISTONS_DOWN: frozenset({Phase.PISTONS_UP, Phase.TRANSPORTING, Phase.SCHEDULING}),
}
for _a, _b in zip(SWAP_CYCLE, SWAP_CYCLE[1:]):
    LEGAL_TRANSITIONS[_a] = frozenset({_b})


class IllegalTransition(RuntimeError):
    pass


class Role(str, enum.Enum):
    LEADER = "leader"
    FOLLOWER = "follower"
    HUB = "hub"
    SUPPORT = "support"
    TRANSIT = "transit"


@dataclass(eq=False)
class RobotSim:
    """Mutable per-robot simulation record."""

    id: int
    params: RobotParams
    battery: BatteryParams
    state: BatteryState
    pose: Pose
    role: Role
    hub: Optional[str] = None
    ctrl: ControllerState = ControllerState()
    last_cmd: BodyVelocity = BodyVelocity()
    bearing: bool = False
    is_support: bool = False

    @property
    def remaining_fraction(self) -> float:
        return 1.0 - self.state.discharge_mah / self.battery.capacity_mah


@dataclass
class ReplacementRecord:
    time_s: float
    hub: str
    leaving: int
    entering: int
    leaving_fraction: float
    entering_fraction: float
    duration_s: float = float("nan")


@dataclass
class RunMetrics:
    ticks: List[Tuple[float, int, str, float, float, float, float]] = field(default_factory=list)
    replacements: List[ReplacementRecord] = field(default_factory=list)
    hub_profile: List[Tuple[int, float, str, Tuple[float, ...]]] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)

    @property
    def replacement_count(self) -> int:
        return len(self.replacements)


@dataclass
class _SwapPlan:
    hub: str
    leaver: int
    entrant: int
    support: int
    slot: int
    bounds: List[int]
    support_point: Tuple[float, float]
    start_tick: int
    record: ReplacementRecord


def derived_rates(cfg: WorldConfig) -> Tuple[float, float, float]:
    """Return ``(r_c, r_d, d_th)`` in mAh, filling unset values from the models.

    ``r_d`` is the charge an active robot spends on one inter-hub leg at the
    nominal loop speed with its share of the payload, ``r_c`` minus what a hub
    resident recharges over the same time, and ``d_th`` the discharge at which
    the unloaded terminal voltage reaches the cutoff.
    """
    pol = cfg.policy
    entry = cfg.fleet[0]
    traj = cfg.trajectory.build()
    legs = max(len(cfg.hubs), 1)
    leg_time = traj.length / legs / traj.speed
    robot = dataclasses.replace(entry.robot, payload_share_kg=cfg.payload_mass_kg / cfg.formation_size)
    radius = getattr(traj, "radius", math.inf)
    nominal = BodyVelocity(traj.speed, traj.speed / radius)
    current = drive_power(nominal, (0.0, 0.0), robot) / cfg.cutoff_voltage_v
    r_d = pol.r_d_mah if pol.r_d_mah is not None else current * leg_time * 1000.0 / 3600.0
    r_c = pol.r_c_mah if pol.r_c_mah is not None else -entry.battery.charge_rate_ma * leg_time / 3600.0
    d_th = pol.d_th_mah if pol.d_th_mah is not None else discharge_at_voltage(entry.battery, cfg.cutoff_voltage_v)
    return r_c, r_d, d_th


def initial_discharges(cfg: WorldConfig) -> Dict[int, float]:
    """Seeded initial discharge per fleet robot; explicit values in the config win."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.initial_charge_range
    out = {}
    for entry in cfg.fleet:
        # draw for every robot so explicit overrides do not shift the others
        frac = float(rng.uniform(lo, hi))
        if entry.initial_discharge_mah is not None:
            out[entry.id] = float(entry.initial_discharge_mah)
        else:
            out[entry.id] = (1.0 - frac) * entry.battery.capacity_mah
    return out


class World:
    """The complete mutable simulation state; advance it with :meth:`step`."""

    def __init__(self, cfg: WorldConfig):
        cfg.validate()
        self.cfg = cfg
        self.dt = cfg.dt
        self.traj = cfg.trajectory.build()
        self.slots: List[FormationSlot] = [s.build() for s in cfg.formation]
        self.F = len(self.slots)
        self.gains = cfg.gains
        self.hubs: Dict[str, HubConfig] = {h.id: h for h in cfg.hubs}
        self.hub_order: List[str] = [h.id for h in cfg.hubs]
        self.residents: Dict[str, List[int]] = {h.id: list(h.residents) for h in cfg.hubs}
        self.armed: Dict[str, bool] = {h: True for h in self.hub_order}
        self.last_serviced: Optional[str] = None
        self.r_c, self.r_d, self.d_th = derived_rates(cfg)
        self.min_sep = min_separation(cfg.robot_dimension_m)

        self.tick_count = 0
        self.path_ticks = 0
        self.transport_ticks = 0
        self.wait_ticks = 0
        self.swap_ticks = 0
        self.distance_m = 0.0
        self.phase = Phase.TRANSPORTING
        self.phase_trace: List[Tuple[float, str]] = [(0.0, Phase.TRANSPORTING.value)]
        self.terminated = False
        self.termination_reason: Optional[str] = None
        self.terminated_by: Optional[int] = None
        self.current_hub: Optional[str] = None
        self.order: Optional[ReplacementOrder] = None
        self.pending: List[Tuple[int, int]] = []
        self.swap: Optional[_SwapPlan] = None
        self.phase_index = 0
        self.next_recheck_tick = 0
        self.first_cutoff_s: Optional[float] = None
        self.transit: set = set()
        self._leader_anchor: Optional[Pose] = None
        self._pending_charge_ticks = 0

        self.min_supporters = self.F
        self.conservation_violations = 0
        self.separation_violations = 0
        self.supporter_violations = 0
        self.hub_events = 0
        self.swap_durations: List[float] = []
        self.metrics = RunMetrics()
        interval = cfg.record_interval_s if cfg.record_interval_s is not None else cfg.dt
        self.record_every = max(1, int(round(interval / cfg.dt)))

        d_init = initial_discharges(cfg)
        self.robots: Dict[int, RobotSim] = {}
        self.fleet_ids = [e.id for e in cfg.fleet]
        ref, ff = leader_command(0.0, self.traj)
        self.slot_ids: List[Optional[int]] = list(cfg.roster)
        share = cfg.payload_mass_kg / self.F
        entries = {e.id: e for e in cfg.fleet}
        for slot_idx, rid in enumerate(self.slot_ids):
            e = entries[rid]
            pose = self._slot_pose(ref, slot_idx)
            self.robots[rid] = RobotSim(
                rid,
                dataclasses.replace(e.robot, payload_share_kg=share),
                e.battery,
                full_state(e.battery, d_init[rid]),
                pose,
                Role.LEADER if slot_idx == 0 else Role.FOLLOWER,
                last_cmd=ff,
                bearing=True,
            )
        for hub_id, ids in self.residents.items():
            hx, hy = self.hubs[hub_id].position
            for rid in ids:
                e = entries[rid]
                self.robots[rid] = RobotSim(
                    rid, e.robot, e.battery, full_state(e.battery, d_init[rid]), Pose(hx, hy, 0.0), Role.HUB, hub=hub_id
                )
        missing = set(self.fleet_ids) - set(self.robots)
        if missing:
            # robots placed nowhere start at the first hub
            first = self.hub_order[0] if self.hub_order else None
            if first is None:
                raise ValueError(f"robots {sorted(missing)} have no formation slot and there are no hubs")
            for rid in sorted(missing):
                e = entries[rid]
                hx, hy = self.hubs[first].position
                self.residents[first].append(rid)
                self.robots[rid] = RobotSim(
                    rid, e.robot, e.battery, full_state(e.battery, d_init[rid]), Pose(hx, hy, 0.0), Role.HUB, hub=first
                )
        self.support_ids: Dict[str, List[int]] = {}
        next_id = max(self.fleet_ids) + 1
        template = cfg.fleet[0]
        for hub_id in self.hub_order:
            hx, hy = self.hubs[hub_id].position
            self.support_ids[hub_id] = []
            for _ in range(cfg.support_per_hub):
                self.robots[next_id] = RobotSim(
                    next_id,
                    template.robot,
                    template.battery,
                    full_state(template.battery),
                    Pose(hx, hy, 0.0),
                    Role.SUPPORT,
                    hub=hub_id,
                    is_support=True,
                )
                self.support_ids[hub_id].append(next_id)
                next_id += 1
        self.all_ids = sorted(self.robots)
        self.n_robots = len(self.all_ids)
        self.supporter_count = self.F
        self._idle_power = {
            rid: electrical_power((0.0, 0.0), (0.0, 0.0), r.params) for rid, r in self.robots.items()
        }
        self._record(force=True)

    # ------------------------------------------------------------------ geometry

    @property
    def t(self) -> float:
        return self.tick_count * self.dt

    @property
    def leader(self) -> RobotSim:
        return self.robots[self.slot_ids[0]]

    def _slot_pose(self, leader_pose: Pose, slot_idx: int) -> Pose:
        if slot_idx == 0:
            return Pose(leader_pose.x, leader_pose.y, leader_pose.theta)
        target = slot_world_target(leader_pose, self.slots[slot_idx])
        d = self.gains.center_offset_d_m
        th = leader_pose.theta
        return Pose(target.x - d * math.cos(th), target.y - d * math.sin(th), th)

    # ------------------------------------------------------------------ phases

    def _enter(self, phase: Phase) -> None:
        if phase not in LEGAL_TRANSITIONS[self.phase]:
            raise IllegalTransition(f"{self.phase.value} -> {phase.value}")
        self.phase = phase
        self.phase_trace.append((self.t, phase.value))

    def hub_arrival_check(self) -> Optional[str]:
        """Edge-triggered hub detection: a hub fires once per entry of the leader."""
        lx, ly = self.leader.pose.x, self.leader.pose.y
        fired = None
        for hub_id in self.hub_order:
            hub = self.hubs[hub_id]
            inside = math.hypot(lx - hub.position[0], ly - hub.position[1]) <= hub.trigger_radius_m
            if inside:
                if self.armed[hub_id] and fired is None:
                    fired = hub_id
                self.armed[hub_id] = False
            else:
                self.armed[hub_id] = True
        return fired

    def schedule_problem(self, hub_id: str, horizon_k: Optional[int] = None) -> ScheduleProblem:
        """Build the scheduling problem from live telemetry at ``hub_id``."""
        self.flush_charging()
        k = self.cfg.policy.horizon_k if horizon_k is None else horizon_k
        start = self.hub_order.index(hub_id)
        hubs = [self.hub_order[(start + j) % len(self.hub_order)] for j in range(k)]
        active = set(self.slot_ids)
        ids = self.fleet_ids
        presence = tuple(tuple(int(r in self.residents[h]) for r in ids) for h in hubs)
        d0 = []
        for r in ids:
            rob = self.robots[r]
            d0.append(min(max(rob.state.discharge_mah, 0.0), rob.battery.capacity_mah))
        return ScheduleProblem(
            n_robots=len(ids),
            horizon_k=k,
            formation_size_f=self.F,
            d0=tuple(d0),
            x0=tuple(int(r in active) for r in ids),
            hub_presence=presence,
            r_c=self.r_c,
            r_d=self.r_d,
            d_th=self.d_th,
            w1=self.cfg.policy.w1,
            w2=self.cfg.policy.w2,
            robot_ids=tuple(ids),
            hub_ids=tuple(hubs),
            capacity_mah=self.cfg.fleet[0].battery.capacity_mah,
        )

    def run_policy_at_hub(self, hub_id: str) -> ReplacementOrder:
        """Consult the configured policy; infeasibility comes back as a waiting order."""
        pol = self.cfg.policy
        if pol.kind == "none":
            return ReplacementOrder(hub_id=hub_id)
        if pol.kind == "baseline":
            return baseline_policy(self.schedule_problem(hub_id, 1), pol.threshold, pol.entrant_min_fraction)
        problem = self.schedule_problem(hub_id)
        try:
            sol = solve(problem)
        except Infeasible:
            log.debug("t=%.1f hub %s: schedule infeasible, waiting", self.t, hub_id)
            return ReplacementOrder(hub_id=hub_id, wait=True)
        return diff_solutions(problem.x0, sol.x[0], hub_id, problem.robot_ids)

    def _schedule(self, hub_id: str) -> None:
        self.flush_charging()
        self._enter(Phase.SCHEDULING)
        self.current_hub = hub_id
        order = self.run_policy_at_hub(hub_id)
        self.order = order
        self.pending = order.pairs
        if self.pending:
            log.info("t=%.1f hub %s: order leaving=%s entering=%s", self.t, hub_id, order.leaving, order.entering)
            self._start_swap()
        elif order.wait:
            if all(self.robots[r].state.discharge_mah <= 0.0 for ids in self.residents.values() for r in ids):
                # nothing left to charge, so waiting cannot make a replacement available
                self._terminate("stalled")
                return
            self._enter(Phase.WAITING)
            self.next_recheck_tick = self.tick_count + max(1, int(round(self.cfg.wait_recheck_s / self.dt)))
        else:
            self._resume()

    def _resume(self) -> None:
        self._enter(Phase.TRANSPORTING)
        self.order = None
        self.current_hub = None
        for rid in self.slot_ids:
            self.robots[rid].last_cmd = BodyVelocity()

    def execute_replacement(self, order: ReplacementOrder) -> None:
        """Start executing ``order`` from the Scheduling phase (no-op for an empty order)."""
        if not order:
            return
        if self.phase is not Phase.SCHEDULING:
            self._enter(Phase.SCHEDULING)
        self.current_hub = order.hub_id
        self.order = order
        self.pending = order.pairs
        self._start_swap()

    # ------------------------------------------------------------------ swap planning

    def _pick_support(self, hub_id: str) -> int:
        ids = self.support_ids.get(hub_id) or [i for ids in self.support_ids.values() for i in ids]
        if not ids:
            raise RuntimeError("no support robot available")
        return ids[0]

    def _start_swap(self) -> None:
        self.flush_charging()
        leaver, entrant = self.pending.pop(0)
        hub_id = self.current_hub
        slot = self.slot_ids.index(leaver)
        support = self._pick_support(hub_id)
        lead = self.leader.pose
        lv = self.robots[leaver].pose
        sx = lv.x - SUPPORT_STANDOFF_M * math.cos(lead.theta)
        sy = lv.y - SUPPORT_STANDOFF_M * math.sin(lead.theta)
        hub_xy = self.hubs[hub_id].position
        sup_xy = (self.robots[support].pose.x, self.robots[support].pose.y)
        ent_xy = (self.robots[entrant].pose.x, self.robots[entrant].pose.y)
        target = self._slot_pose(lead, slot)
        speed = self.cfg.nav_speed_mps
        nav = {
            Phase.SUPPORT_JOINING: math.dist(sup_xy, (sx, sy)) / speed,
            Phase.LEAVER_EXIT: math.dist((lv.x, lv.y), hub_xy) / speed,
            Phase.ENTRANT_JOIN: math.dist(ent_xy, (target.x, target.y)) / speed,
            Phase.SUPPORT_EXIT: math.dist((sx, sy), hub_xy) / speed,
        }
        total = self.cfg.replacement_time_s
        nav_total = sum(nav.values())
        cap = (1.0 - MIN_PISTON_SHARE) * total
        if nav_total > cap:
            nav = {p: v * cap / nav_total for p, v in nav.items()}
            nav_total = cap
        piston = (total - nav_total) / len(PISTON_PHASES)
        cum, bounds = 0.0, []
        for ph in SWAP_CYCLE:
            cum += nav.get(ph, piston)
            bounds.append(int(round(cum / self.dt)))
        bounds[-1] = int(round(total / self.dt))
        rec = ReplacementRecord(
            self.t,
            hub_id,
            leaver,
            entrant,
            self.robots[leaver].remaining_fraction,
            self.robots[entrant].remaining_fraction,
        )
        self.swap = _SwapPlan(hub_id, leaver, entrant, support, slot, bounds, (sx, sy), self.tick_count, rec)
        self.metrics.replacements.append(rec)
        self.phase_index = 0
        self._enter(Phase.PISTONS_UP)

    def _move(self, rob: RobotSim, goal: Tuple[float, float], ticks_left: int) -> None:
        """Advance ``rob`` one tick along the straight line to ``goal`` and drain its pack."""
        x, y = rob.pose.x, rob.pose.y
        dist = math.hypot(goal[0] - x, goal[1] - y)
        if ticks_left <= 0 or dist == 0.0:
            self._idle(rob)
            return
        step = dist / ticks_left
        heading = math.atan2(goal[1] - y, goal[0] - x)
        rob.pose = Pose(x + step * math.cos(heading), y + step * math.sin(heading), heading)
        self._drain(rob, drive_power(BodyVelocity(step / self.dt, 0.0), (0.0, 0.0), rob.params))

    def _phase_end(self) -> None:
        """Apply the state change that completes the current swap phase."""
        self.flush_charging()
        sw = self.swap
        ph = self.phase
        if ph is Phase.SUPPORT_JOINING:
            sup = self.robots[sw.support]
            sup.pose = Pose(sw.support_point[0], sw.support_point[1], sup.pose.theta)
        elif ph is Phase.SUPPORT_UP:
            self.robots[sw.support].bearing = True
            self.supporter_count += 1
        elif ph is Phase.LEAVER_DOWN:
            self.robots[sw.leaver].bearing = False
            self.supporter_count -= 1
        elif ph is Phase.LEAVER_EXIT:
            rob = self.robots[sw.leaver]
            hx, hy = self.hubs[sw.hub].position
            rob.pose = Pose(hx, hy, rob.pose.theta)
            rob.role, rob.hub = Role.HUB, sw.hub
            rob.params = dataclasses.replace(rob.params, payload_share_kg=0.0)
            self.transit.discard(sw.leaver)
            self.residents[sw.hub].append(sw.leaver)
        elif ph is Phase.ENTRANT_JOIN:
            rob = self.robots[sw.entrant]
            rob.pose = self._slot_pose(self.leader.pose if sw.slot else self._leader_anchor, sw.slot)
            rob.role = Role.LEADER if sw.slot == 0 else Role.FOLLOWER
            rob.ctrl = ControllerState()
            rob.last_cmd = BodyVelocity()
            rob.params = dataclasses.replace(rob.params, payload_share_kg=self.cfg.payload_mass_kg / self.F)
            self.transit.discard(sw.entrant)
            self.slot_ids[sw.slot] = sw.entrant
        elif ph is Phase.ENTRANT_UP:
            self.robots[sw.entrant].bearing = True
            self.supporter_count += 1
        elif ph is Phase.SUPPORT_DOWN:
            self.robots[sw.support].bearing = False
            self.supporter_count -= 1
        elif ph is Phase.SUPPORT_EXIT:
            sup = self.robots[sw.support]
            hx, hy = self.hubs[sw.hub].position
            sup.pose = Pose(hx, hy, sup.pose.theta)
            if sw.support not in self.support_ids[sw.hub]:
                for ids in self.support_ids.values():
                    if sw.support in ids:
                        ids.remove(sw.support)
                self.support_ids[sw.hub].append(sw.support)
            sup.hub = sw.hub

    def _phase_start(self) -> None:
        self.flush_charging()
        sw = self.swap
        ph = self.phase
        if ph is Phase.LEAVER_EXIT:
            rob = self.robots[sw.leaver]
            if sw.slot == 0:
                self._leader_anchor = rob.pose
            self.slot_ids[sw.slot] = None
            rob.role = Role.TRANSIT
            self.transit.add(sw.leaver)
        elif ph is Phase.ENTRANT_JOIN:
            rob = self.robots[sw.entrant]
            self.residents[sw.hub].remove(sw.entrant)
            rob.role, rob.hub = Role.TRANSIT, None
            self.transit.add(sw.entrant)

    def _swap_tick(self) -> set:
        sw = self.swap
        elapsed = self.tick_count - sw.start_tick  # ticks already completed in this swap
        end = sw.bounds[self.phase_index]
        ph = self.phase
        movers = set()
        if ph is Phase.SUPPORT_JOINING or ph is Phase.SUPPORT_EXIT:
            goal = sw.support_point if ph is Phase.SUPPORT_JOINING else self.hubs[sw.hub].position
            self._move(self.robots[sw.support], goal, end - elapsed)
            movers.add(sw.support)
        elif ph is Phase.LEAVER_EXIT:
            self._move(self.robots[sw.leaver], self.hubs[sw.hub].position, end - elapsed)
            movers.add(sw.leaver)
        elif ph is Phase.ENTRANT_JOIN:
            anchor = self.leader.pose if sw.slot else self._leader_anchor
            goal = self._slot_pose(anchor, sw.slot)
            self._move(self.robots[sw.entrant], (goal.x, goal.y), end - elapsed)
            movers.add(sw.entrant)
        return movers

    # ------------------------------------------------------------------ per-tick physics

    def _drain(self, rob: RobotSim, power: float) -> None:
        try:
            rob.state = discharge_step(rob.battery, rob.state, power, self.dt)
        except BatteryDepleted as exc:
            rob.state = exc.state
            if rob.id in self.slot_ids or rob.id in self.transit:
                self._terminate("depleted", rob.id)

    def _idle(self, rob: RobotSim) -> None:
        if self.cfg.idle_drain:
            self._drain(rob, self._idle_power[rob.id])

    def _terminate(self, reason: str, robot_id: Optional[int] = None) -> None:
        if not self.terminated:
            self.terminated = True
            self.termination_reason = reason
            self.terminated_by = robot_id

    def _transport_tick(self) -> None:
        dt = self.dt
        gains = self.gains
        lead = self.leader
        ref, ff = leader_command(self.path_ticks * dt, self.traj)
        lead_cmd = clamp_velocity(leader_tracking_command(lead.pose, ref, ff), lead.params)
        lead_pose = lead.pose
        cmds = [(lead, lead_cmd)]
        for slot_idx in range(1, self.F):
            rob = self.robots[self.slot_ids[slot_idx]]
            p = rob.params
            cmd, rob.ctrl = follower_command(
                lead_pose, lead_cmd, rob.pose, self.slots[slot_idx], gains, rob.ctrl, dt,
                p.max_speed_mps, p.max_turn_rate_rps,
            )
            cmds.append((rob, cmd))
        for rob, cmd in cmds:
            p = rob.params
            accel = ((cmd.v - rob.last_cmd.v) / dt, (cmd.w - rob.last_cmd.w) / dt)
            tau = required_torques(cmd, accel, p, p.total_mass_kg)
            self._drain(rob, electrical_power(tau, wheel_speeds(cmd, p), p))
            rob.pose = integrate_kinematics(rob.pose, cmd, p, dt)
            rob.last_cmd = cmd
        self.distance_m += abs(lead_cmd.v) * dt
        self.path_ticks += 1
        self.transport_ticks += 1
        poses = [self.robots[r].pose for r in self.slot_ids]
        if not min_separation_ok(poses, self.min_sep):
            self.separation_violations += 1

    def _charge_supports(self, engaged: set) -> None:
        dt = self.dt
        for ids in self.support_ids.values():
            for rid in ids:
                if rid in engaged:
                    continue
                rob = self.robots[rid]
                if rob.state.discharge_mah > 0.0:
                    rob.state = charge_step(rob.battery, rob.state, dt)

    def flush_charging(self) -> None:
        """Apply the hub charging accumulated since the last flush.

        Constant-current charging with a floor at full is additive in time,
        so residents are charged in one step covering every pending tick.
        Any code that reads or changes hub residency calls this first.
        """
        n = self._pending_charge_ticks
        if n == 0:
            return
        span = n * self.dt
        for ids in self.residents.values():
            for rid in ids:
                rob = self.robots[rid]
                if rob.state.discharge_mah > 0.0:
                    rob.state = charge_step(rob.battery, rob.state, span)
        self._pending_charge_ticks = 0

    def step(self) -> None:
        """Advance the world by one tick of ``dt``."""
        if self.terminated:
            raise RuntimeError("world has terminated")
        engaged: set = set()
        if self.phase is Phase.TRANSPORTING:
            self._transport_tick()
        else:
            movers: set = set()
            halted = [r for r in self.slot_ids if r is not None] + sorted(self.transit)
            if self.phase is Phase.WAITING:
                self.wait_ticks += 1
            else:
                self.swap_ticks += 1
                movers = self._swap_tick()
                engaged = {self.swap.support}
                halted.append(self.swap.support)
            for rid in halted:
                if rid not in movers:
                    self._idle(self.robots[rid])
        self._pending_charge_ticks += 1
        self._charge_supports(engaged)
        self.tick_count += 1
        self._check_invariants()
        self._after_tick()
        self._record()

    def _after_tick(self) -> None:
        cfg = self.cfg
        if self.first_cutoff_s is None:
            for rid in self.slot_ids:
                if rid is not None and self.robots[rid].state.voltage < cfg.cutoff_voltage_v:
                    self.first_cutoff_s = self.t
                    if cfg.stop_at_cutoff:
                        self._terminate("cutoff", rid)
                    break
        if self.terminated:
            return
        if self.phase is Phase.TRANSPORTING:
            if cfg.policy.kind != "none":
                hub_id = self.hub_arrival_check()
                if hub_id is not None:
                    self.hub_events += 1
                    self.last_serviced = hub_id
                    self._log_hub_profile(hub_id)
                    self._schedule(hub_id)
        elif self.phase is Phase.WAITING:
            if self.tick_count >= self.next_recheck_tick:
                self._schedule(self.current_hub)
        else:
            while self.swap is not None and self.tick_count - self.swap.start_tick >= self.swap.bounds[self.phase_index]:
                self._advance_swap_phase()
        if not self.terminated and self.t >= cfg.max_sim_time_s - 1e-9:
            self._terminate("max_time")

    def _advance_swap_phase(self) -> None:
        self._phase_end()
        if self.phase is Phase.PISTONS_DOWN:
            sw = self.swap
            duration = (self.tick_count - sw.start_tick) * self.dt
            sw.record.duration_s = duration
            self.swap_durations.append(duration)
            self.swap = None
            if self.pending:
                self._start_swap()
            elif self.order is not None and self.order.wait:
                self._schedule(self.current_hub)
            else:
                self._resume()
            return
        self.phase_index += 1
        self._enter(SWAP_CYCLE[self.phase_index])
        self._phase_start()

    # ------------------------------------------------------------------ invariants and records

    def _check_invariants(self) -> None:
        occupied = [r for r in self.slot_ids if r is not None]
        hub_ids = [r for ids in self.residents.values() for r in ids]
        support = [r for ids in self.support_ids.values() for r in ids]
        total = len(occupied) + len(hub_ids) + len(self.transit) + len(support)
        union = set(occupied) | set(hub_ids) | self.transit | set(support)
        if total != self.n_robots or len(union) != self.n_robots:
            self.conservation_violations += 1
        supporters = sum(1 for r in occupied if self.robots[r].bearing)
        if self.swap is not None and self.robots[self.swap.support].bearing:
            supporters += 1
        if supporters != self.supporter_count:
            self.conservation_violations += 1
        if supporters < self.min_supporters:
            self.min_supporters = supporters
        if supporters < self.F:
            self.supporter_violations += 1

    def _record(self, force: bool = False) -> None:
        if not force and self.tick_count % self.record_every and not self.terminated:
            return
        self.flush_charging()
        t = self.t
        rows = self.metrics.ticks
        for rid in self.all_ids:
            rob = self.robots[rid]
            rows.append((t, rid, rob.role.value, rob.state.voltage, rob.state.discharge_mah, rob.pose.x, rob.pose.y))

    def _log_hub_profile(self, hub_id: str) -> None:
        self.flush_charging()
        fracs = tuple(self.robots[r].remaining_fraction for r in self.fleet_ids)
        self.metrics.hub_profile.append((self.hub_events, self.t, hub_id, fracs))

    def finalize(self) -> RunMetrics:
        self.flush_charging()
        cfg = self.cfg
        m = self.metrics
        m.summary = {
            "policy": cfg.policy.label,
            "seed": cfg.seed,
            "payload_mass_kg": cfg.payload_mass_kg,
            "horizon_k": cfg.policy.horizon_k,
            "operational_time_s": self.transport_ticks * self.dt,
            "distance_m": self.distance_m,
            "replacement_count": len(m.replacements),
            "termination_reason": self.termination_reason,
            "terminated_by": self.terminated_by,
            "sim_time_s": self.t,
            "waiting_time_s": self.wait_ticks * self.dt,
            "replacement_time_s": self.swap_ticks * self.dt,
            "hub_events": self.hub_events,
            "first_cutoff_time_s": self.first_cutoff_s,
            "min_supporters": self.min_supporters,
            "formation_size": self.F,
            "supporter_violations": self.supporter_violations,
            "conservation_violations": self.conservation_violations,
            "separation_violations": self.separation_violations,
            "max_swap_duration_error_s": max((abs(d - cfg.replacement_time_s) for d in self.swap_durations), default=0.0),
            "r_c_mah": self.r_c,
            "r_d_mah": self.r_d,
            "d_th_mah": self.d_th,
        }
        return m


def tick(world: World) -> World:
    """Advance ``world`` by one tick in place and return it."""
    world.step()
    return world


def run(cfg: WorldConfig) -> RunMetrics:
    """Simulate until the time limit or until a formation robot is depleted."""
    world = World(cfg)
    while not world.terminated:
        world.step()
    return world.finalize()
