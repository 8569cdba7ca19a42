"""Battery-aware robot replacement for multi-robot payload transport."""

from .battery import BatteryParams, BatteryState, discharge_step, charge_step, voltage_curve
from .config import WorldConfig, default_config
from .drivetrain import BodyVelocity, Pose, RobotParams
from .engine import RunMetrics, World, run, tick
from .scheduler import Infeasible, ReplacementOrder, ScheduleProblem, ScheduleSolution, solve

__all__ = [
    "BatteryParams",
    "BatteryState",
    "BodyVelocity",
    "Infeasible",
    "Pose",
    "ReplacementOrder",
    "RobotParams",
    "RunMetrics",
    "ScheduleProblem",
    "ScheduleSolution",
    "World",
    "WorldConfig",
    "charge_step",
    "default_config",
    "discharge_step",
    "run",
    "solve",
    "tick",
    "voltage_curve",
]
__version__ = "0.1.0"
