"""World configuration: dataclasses, defaults and YAML (de)serialisation.

A config document mirrors :class:`WorldConfig` field for field. Two shorthands
are accepted on load and expanded, so that ``dump(load(text))`` is canonical:

* ``fleet: {count: 12, robot: {...}, battery: {...}}`` expands to one entry per
  robot with ids ``1..count``;
* ``hubs: {count: 3, offset_m: 0.45}`` places hubs evenly along the trajectory
  and distributes the robots that start outside the formation among them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .battery import BatteryParams
from .drivetrain import RobotParams
from .formation import (
    CircleTrajectory,
    ControlGains,
    FormationSlot,
    WaypointLoop,
    trajectory_point,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: str = "circle"
    center: Tuple[float, float] = (0.0, 0.0)
    radius_m: float = 1.2
    speed_mps: float = 0.06
    start_angle_deg: float = -90.0
    clockwise: bool = False
    points: Tuple[Tuple[float, float], ...] = ()

    def build(self) -> Union[CircleTrajectory, WaypointLoop]:
        if self.kind == "circle":
            return CircleTrajectory(
                tuple(self.center), self.radius_m, self.speed_mps, math.radians(self.start_angle_deg), self.clockwise
            )
        if self.kind == "waypoints":
            return WaypointLoop(tuple(tuple(p) for p in self.points), self.speed_mps)
        raise ConfigError(f"unknown trajectory kind {self.kind!r}")


@dataclass(frozen=True)
class HubConfig:
    id: str
    position: Tuple[float, float]
    trigger_radius_m: float = 0.5
    residents: Tuple[int, ...] = ()


@dataclass(frozen=True)
class FleetEntry:
    id: int
    robot: RobotParams = RobotParams()
    battery: BatteryParams = BatteryParams()
    initial_discharge_mah: Optional[float] = None


@dataclass(frozen=True)
class SlotConfig:
    rho_d: float
    psi_deg: float

    def build(self) -> FormationSlot:
        return FormationSlot(self.rho_d, math.radians(self.psi_deg))


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "optimized"
    threshold: float = 0.3
    entrant_min_fraction: Optional[float] = None
    horizon_k: int = 2
    w1: float = 1.0
    w2: float = 0.5
    d_th_mah: Optional[float] = None
    r_c_mah: Optional[float] = None
    r_d_mah: Optional[float] = None

    @property
    def label(self) -> str:
        if self.kind == "baseline":
            return f"baseline{round(self.threshold * 100)}"
        return self.kind


def default_slots() -> Tuple[SlotConfig, ...]:
    """Centre leader plus the four followers of the square formation."""
    return (SlotConfig(0.0, 0.0),) + tuple(SlotConfig(0.6, a) for a in (0.0, 90.0, 180.0, -90.0))


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 0.1
    trajectory: TrajectoryConfig = TrajectoryConfig()
    hubs: Tuple[HubConfig, ...] = ()
    fleet: Tuple[FleetEntry, ...] = ()
    formation: Tuple[SlotConfig, ...] = field(default_factory=default_slots)
    roster: Tuple[int, ...] = ()
    payload_mass_kg: float = 6.0
    policy: PolicyConfig = PolicyConfig()
    replacement_time_s: float = 180.0
    seed: int = 0
    max_sim_time_s: float = 4 * 3600.0
    initial_charge_range: Tuple[float, float] = (0.6, 1.0)
    support_per_hub: int = 1
    gains: ControlGains = ControlGains()
    robot_dimension_m: float = 0.2
    nav_speed_mps: float = 0.06
    wait_recheck_s: float = 5.0
    idle_drain: bool = True
    cutoff_voltage_v: float = 11.5
    stop_at_cutoff: bool = False
    record_interval_s: Optional[float] = None

    @property
    def formation_size(self) -> int:
        return len(self.formation)

    def validate(self) -> "WorldConfig":
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.formation:
            raise ConfigError("formation needs at least one slot")
        if self.formation[0].rho_d != 0.0:
            raise ConfigError("the first formation slot is the leader's and must have rho_d = 0")
        if self.formation_size > len(self.fleet):
            raise ConfigError("formation is larger than the fleet")
        ids = [e.id for e in self.fleet]
        if len(set(ids)) != len(ids):
            raise ConfigError("fleet ids must be unique")
        if self.policy.kind not in ("none", "baseline", "optimized"):
            raise ConfigError(f"unknown policy {self.policy.kind!r}")
        if self.policy.kind != "none" and not self.hubs:
            raise ConfigError("replacement policies need at least one hub")
        if self.policy.kind == "baseline" and not 0 < self.policy.threshold < 1:
            raise ConfigError("baseline threshold must lie in (0, 1)")
        if self.policy.horizon_k < 1:
            raise ConfigError("horizon_k must be at least 1")
        lo, hi = self.initial_charge_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigError("initial_charge_range must satisfy 0 <= lo <= hi <= 1")
        if self.roster:
            if len(self.roster) != self.formation_size or len(set(self.roster)) != len(self.roster):
                raise ConfigError("roster must name one distinct robot per formation slot")
            if not set(self.roster) <= set(ids):
                raise ConfigError("roster names robots outside the fleet")
        placed = list(self.roster) + [r for h in self.hubs for r in h.residents]
        if len(set(placed)) != len(placed):
            raise ConfigError("a robot is placed in more than one location")
        if self.replacement_time_s <= 0:
            raise ConfigError("replacement_time_s must be positive")
        if self.payload_mass_kg < 0:
            raise ConfigError("payload_mass_kg must be non-negative")
        return self


def make_hubs(
    trajectory: TrajectoryConfig, count: int, offset_m: float = 0.45, trigger_radius_m: float = 0.5
) -> List[HubConfig]:
    """Hubs spaced evenly by arc length, pushed ``offset_m`` outward from the path."""
    traj = trajectory.build()
    hubs = []
    for h in range(count):
        s = traj.length * (h + 0.5) / count
        x, y, th = trajectory_point(traj, s)
        # outward normal: right-hand side for counter-clockwise travel
        sgn = 1.0 if getattr(traj, "clockwise", False) else -1.0
        nx, ny = -math.sin(th) * sgn, math.cos(th) * sgn
        hubs.append(HubConfig(f"H{h + 1}", (round(x + offset_m * nx, 9), round(y + offset_m * ny, 9)), trigger_radius_m))
    return hubs


def _distribute(hubs: List[HubConfig], robot_ids: List[int]) -> Tuple[HubConfig, ...]:
    buckets: List[List[int]] = [[] for _ in hubs]
    for n, rid in enumerate(robot_ids):
        buckets[n % len(hubs)].append(rid)
    return tuple(dataclasses.replace(h, residents=tuple(b)) for h, b in zip(hubs, buckets))


def _from_value(tp: Any, value: Any) -> Any:
    if value is None:
        return None
    origin = getattr(tp, "__origin__", None)
    if is_dataclass(tp):
        return _from_dict(tp, value)
    if origin is Union:
        args = [a for a in tp.__args__ if a is not type(None)]
        return _from_value(args[0], value) if len(args) == 1 else value
    if origin in (tuple, Tuple):
        args = tp.__args__
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_from_value(args[0], v) for v in value)
        return tuple(_from_value(a, v) for a, v in zip(args, value))
    if tp is float:
        return float(value)
    if tp is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an integer, got {value!r}")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value
    return value


_TYPE_HINTS: Dict[type, Dict[str, Any]] = {}


def _hints(cls: type) -> Dict[str, Any]:
    if cls not in _TYPE_HINTS:
        import typing

        _TYPE_HINTS[cls] = typing.get_type_hints(cls)
    return _TYPE_HINTS[cls]


def _from_dict(cls: type, data: Dict[str, Any]) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    hints = _hints(cls)
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = {k: _from_value(hints[k], v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def to_record(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: to_record(getattr(obj, f.name)) for f in fields(obj) if f.init}
    if isinstance(obj, (tuple, list)):
        return [to_record(v) for v in obj]
    return obj


def from_record(data: Dict[str, Any]) -> WorldConfig:
    """Build a validated config from a plain mapping, expanding shorthands."""
    data = dict(data or {})
    fleet = data.get("fleet")
    if isinstance(fleet, dict):
        fleet = dict(fleet)
        count = int(fleet.pop("count"))
        robot = fleet.pop("robot", {})
        battery = fleet.pop("battery", {})
        initial = fleet.pop("initial_discharge_mah", {}) or {}
        if fleet:
            raise ConfigError(f"unknown fleet shorthand fields: {sorted(fleet)}")
        data["fleet"] = [
            {"id": i, "robot": robot, "battery": battery, "initial_discharge_mah": initial.get(i)}
            for i in range(1, count + 1)
        ]
    elif fleet is None:
        data["fleet"] = [{"id": i} for i in range(1, 6)]
    hubs = data.get("hubs")
    hub_shorthand = isinstance(hubs, dict)
    if hub_shorthand:
        data["hubs"] = []
    cfg = _from_dict(WorldConfig, data)
    if not cfg.roster:
        cfg = dataclasses.replace(cfg, roster=tuple(e.id for e in cfg.fleet[: cfg.formation_size]))
    if hub_shorthand:
        generated = make_hubs(
            cfg.trajectory,
            int(hubs.get("count", 3)),
            float(hubs.get("offset_m", 0.45)),
            float(hubs.get("trigger_radius_m", 0.5)),
        )
        spare = [e.id for e in cfg.fleet if e.id not in cfg.roster]
        cfg = dataclasses.replace(cfg, hubs=_distribute(generated, spare))
    return cfg.validate()


def loads(text: str) -> WorldConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return from_record(data)


def load(path) -> WorldConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: WorldConfig) -> str:
    return yaml.safe_dump(to_record(cfg), sort_keys=False, default_flow_style=None)


def dump(cfg: WorldConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))


def apply_overrides(cfg: WorldConfig, **overrides: Any) -> WorldConfig:
    """Replace top-level fields (``policy`` may be a label such as ``baseline30``)."""
    updates: Dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "policy" and isinstance(value, str):
            updates["policy"] = parse_policy_label(value, cfg.policy)
        elif key == "horizon_k":
            updates["policy"] = dataclasses.replace(updates.get("policy", cfg.policy), horizon_k=int(value))
        else:
            updates[key] = value
    return dataclasses.replace(cfg, **updates).validate() if updates else cfg


def parse_policy_label(label: str, base: PolicyConfig = PolicyConfig()) -> PolicyConfig:
    """``none``, ``optimized`` or ``baseline<percent>`` (e.g. ``baseline40``)."""
    label = label.strip().lower()
    if label in ("none", "optimized"):
        return dataclasses.replace(base, kind=label)
    if label.startswith("baseline"):
        pct = label[len("baseline") :] or "30"
        try:
            return dataclasses.replace(base, kind="baseline", threshold=float(pct) / 100.0)
        except ValueError:
            pass
    raise ConfigError(f"unknown policy label {label!r}")


DEFAULT_D_TH_MAH = 1080.0
DEFAULT_W2 = 400.0


def default_config(**overrides: Any) -> WorldConfig:
    """Five-robot square formation, eight robots in total, two hubs.

    The optimizer's eligibility limit is set to 90% of pack capacity, since
    the voltage-derived fallback would bar most robots from the start. The
    retention reward is raised to a few legs' worth of discharge so the
    optimizer does not swap for marginal gains on this short loop.
    """
    policy = {"d_th_mah": DEFAULT_D_TH_MAH, "w2": DEFAULT_W2}
    record: Dict[str, Any] = {"fleet": {"count": 8}, "hubs": {"count": 2}, "policy": policy}
    record.update(overrides)
    return from_record(record)
