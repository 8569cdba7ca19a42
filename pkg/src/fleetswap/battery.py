"""Li-Ion discharge and recharge model.

The open-circuit behaviour is a rational curve fitted to a 1200 mAh pack:
``V*I**n`` as a function of consumed charge ``D`` (mAh). Terminal voltage under
an electrical load follows from ``V**(1-n) * P**n = curve(D)``.

All bookkeeping is in mAh with second-based timesteps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy.optimize import brentq

MAH_PER_AMP_SECOND = 1000.0 / 3600.0
MIN_POWER_W = 1e-9
POLE_TOLERANCE = 1e-12


class BatteryDomainError(ValueError):
    """The fitted curve has a pole (near-zero denominator) at the queried discharge."""


class BatteryDepleted(Exception):
    """Raised when a discharge step would consume more than the pack capacity.

    ``state`` holds the saturated state (discharge clamped at capacity) so the
    caller can record it before halting the robot.
    """

    def __init__(self, state: "BatteryState"):
        super().__init__(f"battery depleted at {state.discharge_mah:.3f} mAh")
        self.state = state


@dataclass(frozen=True)
class BatteryParams:
    a1: float = 12.0
    a2: float = 3.409
    a3: float = 39.55
    a4: float = -0.002653
    a5: float = -0.03203
    a6: float = -8.112e-8
    n: float = 0.005
    capacity_mah: float = 1200.0
    v_full: float = 12.0
    charge_rate_ma: float = 1200.0

    def __post_init__(self):
        if not self.capacity_mah > 0:
            raise ValueError("capacity_mah must be positive")
        if not 0 < self.n < 1:
            raise ValueError("n must lie in (0, 1)")
        if self.charge_rate_ma < 0:
            raise ValueError("charge_rate_ma must be non-negative")
        if not self.v_full > 0:
            raise ValueError("v_full must be positive")


class BatteryState(NamedTuple):
    """Immutable pack state; a tuple because the engine builds one per robot per tick."""

    discharge_mah: float = 0.0
    voltage: float = 12.0
    last_current_a: float = 0.0


def voltage_curve(params: BatteryParams, d: float) -> float:
    """Evaluate the fitted ``V*I**n`` curve at ``d`` mAh consumed."""
    den = 1.0 + params.a2 * d + params.a4 * d * d + params.a6 * d * d * d
    if abs(den) < POLE_TOLERANCE:
        raise BatteryDomainError(f"voltage curve has a pole near d={d!r} mAh")
    return (params.a1 + params.a3 * d + params.a5 * d * d) / den


def _rest_voltage(params: BatteryParams, d: float) -> float:
    return min(voltage_curve(params, d), params.v_full)


def full_state(params: BatteryParams, discharge_mah: float = 0.0) -> BatteryState:
    """A resting state (no load) at the given consumed charge."""
    d = min(max(discharge_mah, 0.0), params.capacity_mah)
    return BatteryState(d, _rest_voltage(params, d), 0.0)


def discharge_step(
    params: BatteryParams, state: BatteryState, electrical_power_w: float, dt: float
) -> BatteryState:
    """Advance the pack by ``dt`` seconds under a constant electrical load.

    Raises:
        BatteryDepleted: the step would consume more than ``capacity_mah``.
    """
    if electrical_power_w < 0:
        raise ValueError("electrical power must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    d_prev = state.discharge_mah
    vin = voltage_curve(params, d_prev)
    if electrical_power_w < MIN_POWER_W:
        return BatteryState(d_prev, min(vin, params.v_full), 0.0)
    n = params.n
    v_t = math.pow(vin / math.pow(electrical_power_w, n), 1.0 / (1.0 - n))
    v_t = min(v_t, params.v_full)
    i_t = electrical_power_w / v_t
    d_t = d_prev + i_t * dt * MAH_PER_AMP_SECOND
    if d_t > params.capacity_mah:
        raise BatteryDepleted(BatteryState(params.capacity_mah, v_t, i_t))
    return BatteryState(d_t, v_t, i_t)


def charge_step(params: BatteryParams, state: BatteryState, dt: float) -> BatteryState:
    """Constant-current recharge; discharge floors at zero."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if state.discharge_mah <= 0.0:
        return state
    d = state.discharge_mah - params.charge_rate_ma * dt / 3600.0
    if d < 0.0:
        d = 0.0
    return BatteryState(d, _rest_voltage(params, d), 0.0)


def remaining_fraction(params: BatteryParams, state: BatteryState) -> float:
    return 1.0 - state.discharge_mah / params.capacity_mah


def discharge_at_voltage(params: BatteryParams, volts: float) -> float:
    """Consumed charge (mAh) at which the rest curve first reaches ``volts``.

    The fitted curve is monotone decreasing over the operating range, so a
    bracketing root find on ``[0, capacity]`` is sufficient.
    """
    lo, hi = 0.0, params.capacity_mah
    f_lo = voltage_curve(params, lo) - volts
    f_hi = voltage_curve(params, hi) - volts
    if f_lo <= 0:
        return 0.0
    if f_hi >= 0:
        return hi
    return brentq(lambda d: voltage_curve(params, d) - volts, lo, hi, xtol=1e-9)
