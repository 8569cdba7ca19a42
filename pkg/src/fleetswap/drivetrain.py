"""Differential-drive kinematics and inverse dynamics.

Body velocities are turned into wheel speeds, the wheel torques needed to
produce the commanded accelerations against rolling resistance, and finally
the electrical power the two DC motors pull from the battery.

Kinematics are integrated with explicit Euler: ``n`` steps of ``dt`` are the
scheme, there is no sub-stepping or arc correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

GRAVITY = 9.81


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


class Pose(NamedTuple):
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    phi_r: float = 0.0
    phi_l: float = 0.0


class BodyVelocity(NamedTuple):
    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class RobotParams:
    wheel_radius_m: float = 0.035
    wheel_base_m: float = 0.115
    chassis_mass_kg: float = 1.5
    wheel_mass_kg: float = 0.1
    payload_share_kg: float = 0.0
    torque_const_kt: float = 28.24e-3
    back_emf_ke: Optional[float] = None
    armature_resistance_r: float = 2.4
    no_load_current_i0: float = 0.06
    damping_b: float = 1e-5
    motor_efficiency_eta: float = 0.8
    rolling_resist_coeff: float = 0.0727
    max_speed_mps: float = 0.15
    max_turn_rate_rps: float = 1.0

    def __post_init__(self):
        if self.back_emf_ke is None:
            # SI DC-motor identity
            object.__setattr__(self, "back_emf_ke", self.torque_const_kt)
        positive = (
            "wheel_radius_m",
            "wheel_base_m",
            "chassis_mass_kg",
            "wheel_mass_kg",
            "torque_const_kt",
            "back_emf_ke",
            "armature_resistance_r",
            "max_speed_mps",
            "max_turn_rate_rps",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("no_load_current_i0", "damping_b", "rolling_resist_coeff", "payload_share_kg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.motor_efficiency_eta <= 1:
            raise ValueError("motor_efficiency_eta must lie in (0, 1]")

    @property
    def total_mass_kg(self) -> float:
        return self.chassis_mass_kg + 2.0 * self.wheel_mass_kg + self.payload_share_kg


def clamp_velocity(vel: BodyVelocity, params: RobotParams) -> BodyVelocity:
    vmax, wmax = params.max_speed_mps, params.max_turn_rate_rps
    return BodyVelocity(min(max(vel.v, -vmax), vmax), min(max(vel.w, -wmax), wmax))


def integrate_kinematics(pose: Pose, vel: BodyVelocity, params: RobotParams, dt: float) -> Pose:
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, w = vel
    if v == 0.0 and w == 0.0:
        return pose
    half = 0.5 * w * params.wheel_base_m
    r = params.wheel_radius_m
    return Pose(
        pose.x + v * math.cos(pose.theta) * dt,
        pose.y + v * math.sin(pose.theta) * dt,
        wrap_angle(pose.theta + w * dt),
        pose.phi_r + (v + half) / r * dt,
        pose.phi_l + (v - half) / r * dt,
    )


def wheel_speeds(vel: BodyVelocity, params: RobotParams) -> Tuple[float, float]:
    half = 0.5 * vel.w * params.wheel_base_m
    r = params.wheel_radius_m
    return (vel.v + half) / r, (vel.v - half) / r


def yaw_inertia(params: RobotParams, total_mass_kg: float) -> float:
    """Point-mass ring at half the track plus the reflected spin inertia of the wheels."""
    half_track = 0.5 * params.wheel_base_m
    wheel_spin = 0.5 * params.wheel_mass_kg * params.wheel_radius_m**2
    reflected = 2.0 * wheel_spin / params.wheel_radius_m**2
    return (total_mass_kg + reflected) * half_track**2


def required_torques(
    vel: BodyVelocity,
    accel: Tuple[float, float],
    params: RobotParams,
    total_mass_kg: float,
) -> Tuple[float, float]:
    """Per-wheel torques (right, left) for planar rigid-body motion on flat ground."""
    if not total_mass_kg > 0:
        raise ValueError("total_mass_kg must be positive")
    v_dot, w_dot = accel
    sign_v = (vel.v > 0) - (vel.v < 0)
    force = total_mass_kg * v_dot + params.rolling_resist_coeff * total_mass_kg * GRAVITY * sign_v
    moment = yaw_inertia(params, total_mass_kg) * w_dot
    r, base = params.wheel_radius_m, params.wheel_base_m
    return r * (0.5 * force + moment / base), r * (0.5 * force - moment / base)


def electrical_power(
    tau: Tuple[float, float], speeds: Tuple[float, float], params: RobotParams
) -> float:
    """Battery-side power drawn by both motors (W).

    Motors never regenerate, and each motor draws at least the larger of its
    armature-circuit power and its efficiency-scaled shaft power.
    """
    kt, ke = params.torque_const_kt, params.back_emf_ke
    res, i0, b, eta = (
        params.armature_resistance_r,
        params.no_load_current_i0,
        params.damping_b,
        params.motor_efficiency_eta,
    )
    total = 0.0
    for torque, phi_dot in zip(tau, speeds):
        current = (torque + b * phi_dot) / kt + i0
        volts = current * res + ke * phi_dot
        p_elec = volts * current
        if p_elec < 0.0:
            p_elec = 0.0
        p_mech = torque * phi_dot / eta
        total += p_elec if p_elec >= p_mech else p_mech
    return total


def drive_power(
    vel: BodyVelocity,
    accel: Tuple[float, float],
    params: RobotParams,
    total_mass_kg: Optional[float] = None,
) -> float:
    """Convenience chain: velocity and acceleration to battery power."""
    mass = params.total_mass_kg if total_mass_kg is None else total_mass_kg
    tau = required_torques(vel, accel, params, mass)
    return electrical_power(tau, wheel_speeds(vel, params), params)
