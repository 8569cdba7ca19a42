"""Rolling-resistance calibration against an endurance target.

The motor constants other than the torque constant and armature resistance are
not published for the robots being modelled, so the rolling-resistance
coefficient is tuned until a robot carrying its share of the payload reaches a
cutoff voltage after a target duration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from scipy.optimize import brentq

from .battery import BatteryDepleted, BatteryParams, discharge_step, full_state
from .drivetrain import BodyVelocity, RobotParams, drive_power

# 5 robots, 6 kg payload, 11.5 V cutoff reached after ~25 minutes on hardware
TARGET_FORMATION_SIZE = 5
TARGET_PAYLOAD_KG = 6.0
TARGET_CUTOFF_V = 11.5
TARGET_DURATION_S = 25 * 60.0
NOMINAL_VELOCITY = BodyVelocity(0.06, 0.05)


def time_to_voltage(
    robot: RobotParams,
    battery: BatteryParams,
    vel: BodyVelocity = NOMINAL_VELOCITY,
    cutoff_v: float = TARGET_CUTOFF_V,
    dt: float = 1.0,
    limit_s: float = 24 * 3600.0,
) -> float:
    """Seconds of steady driving from a full pack until the terminal voltage drops below ``cutoff_v``."""
    power = drive_power(vel, (0.0, 0.0), robot)
    state = full_state(battery)
    t = 0.0
    while t < limit_s:
        try:
            state = discharge_step(battery, state, power, dt)
        except BatteryDepleted:
            return t + dt
        t += dt
        if state.voltage < cutoff_v:
            return t
    return float("inf")


@dataclass
class CalibrationResult:
    rolling_resist_coeff: float
    achieved_s: float
    no_payload_s: float


def calibrate_rolling_resistance(
    robot: RobotParams = RobotParams(),
    battery: BatteryParams = BatteryParams(),
    formation_size: int = TARGET_FORMATION_SIZE,
    payload_kg: float = TARGET_PAYLOAD_KG,
    target_s: float = TARGET_DURATION_S,
    cutoff_v: float = TARGET_CUTOFF_V,
) -> CalibrationResult:
    loaded = replace(robot, payload_share_kg=payload_kg / formation_size)

    def gap(mu: float) -> float:
        return time_to_voltage(replace(loaded, rolling_resist_coeff=mu), battery, cutoff_v=cutoff_v) - target_s

    mu = brentq(gap, 1e-4, 1.0, xtol=1e-6)
    mu = round(mu, 4)
    achieved = time_to_voltage(replace(loaded, rolling_resist_coeff=mu), battery, cutoff_v=cutoff_v)
    empty = time_to_voltage(replace(robot, payload_share_kg=0.0, rolling_resist_coeff=mu), battery, cutoff_v=cutoff_v)
    return CalibrationResult(mu, achieved, empty)
