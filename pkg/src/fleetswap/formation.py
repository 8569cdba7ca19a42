"""Leader trajectories and the decentralised leader-follower control law.

Each follower regulates a control point a distance ``d`` ahead of its axle
onto a slot defined by a distance and bearing from the leader. The auxiliary
states ``alpha`` (longitudinal) and ``beta`` (lateral) are saturating filters of
the tracking error integrated with the same Euler step as the physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

from .drivetrain import BodyVelocity, Pose, wrap_angle

DELTA_LOCALIZATION_M = 0.05


class DegenerateGeometry(ValueError):
    """Controller offset ``d`` is zero, the angular law would divide by zero."""


@dataclass(frozen=True)
class FormationSlot:
    rho_d: float
    psi_d: float
    robot_id: Optional[int] = None

    def occupied_by(self, robot_id: Optional[int]) -> "FormationSlot":
        return FormationSlot(self.rho_d, self.psi_d, robot_id)


def square_slots() -> List[FormationSlot]:
    """Square formation around a centre leader, 0.6 m at 0, 90, 180 and -90 degrees."""
    return [FormationSlot(0.6, math.radians(a)) for a in (0.0, 90.0, 180.0, -90.0)]


@dataclass(frozen=True)
class ControlGains:
    k1: float = 1.5
    k2: float = 1.0
    k3: float = 0.025
    k4: float = 15.0
    k5: float = 1.0
    k6: float = 1.0
    center_offset_d_m: float = 0.05
    # "consistent" uses sin(psi + theta_ij) in the longitudinal feed-forward,
    # "printed" uses sin(psi - theta_ij).
    bearing_sign: str = "consistent"

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4", "k5", "k6"):
            if not getattr(self, name) > 0:
                raise ValueError(f"gain {name} must be positive")
        if self.bearing_sign not in ("consistent", "printed"):
            raise ValueError("bearing_sign must be 'consistent' or 'printed'")


class ControllerState(NamedTuple):
    alpha: float = 0.0
    beta: float = 0.0


@dataclass(frozen=True)
class CircleTrajectory:
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.2
    speed: float = 0.06
    start_angle: float = -math.pi / 2
    clockwise: bool = False

    @property
    def length(self) -> float:
        return 2.0 * math.pi * self.radius

    @property
    def period(self) -> float:
        return self.length / self.speed


@dataclass(frozen=True)
class WaypointLoop:
    points: Tuple[Tuple[float, float], ...]
    speed: float = 0.06
    _cum: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a waypoint loop needs at least two points")
        cum = [0.0]
        pts = list(self.points) + [self.points[0]]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            cum.append(cum[-1] + math.hypot(x1 - x0, y1 - y0))
        object.__setattr__(self, "_cum", tuple(cum))

    @property
    def length(self) -> float:
        return self._cum[-1]

    @property
    def period(self) -> float:
        return self.length / self.speed


TrajectorySpec = Union[CircleTrajectory, WaypointLoop]


def _circle_point(traj: CircleTrajectory, s: float) -> Tuple[float, float, float]:
    sgn = -1.0 if traj.clockwise else 1.0
    ang = traj.start_angle + sgn * s / traj.radius
    x = traj.center[0] + traj.radius * math.cos(ang)
    y = traj.center[1] + traj.radius * math.sin(ang)
    return x, y, wrap_angle(ang + sgn * math.pi / 2)


def _loop_point(traj: WaypointLoop, s: float) -> Tuple[float, float, float]:
    s = s % traj.length
    cum = traj._cum
    pts = traj.points
    for i in range(len(pts)):
        if s < cum[i + 1] or i == len(pts) - 1:
            x0, y0 = pts[i]
            x1, y1 = pts[(i + 1) % len(pts)]
            seg = cum[i + 1] - cum[i]
            u = (s - cum[i]) / seg if seg > 0 else 0.0
            return x0 + u * (x1 - x0), y0 + u * (y1 - y0), math.atan2(y1 - y0, x1 - x0)
    raise AssertionError("unreachable")


def trajectory_point(traj: TrajectorySpec, s: float) -> Tuple[float, float, float]:
    """Position and tangent heading at arc length ``s`` along the loop."""
    if isinstance(traj, CircleTrajectory):
        return _circle_point(traj, s)
    return _loop_point(traj, s)


def leader_command(t: float, trajectory: TrajectorySpec) -> Tuple[Pose, BodyVelocity]:
    """Reference pose and feed-forward velocity ``t`` seconds into the loop."""
    s = trajectory.speed * t
    x, y, th = trajectory_point(trajectory, s)
    if isinstance(trajectory, CircleTrajectory):
        w = trajectory.speed / trajectory.radius
        w = -w if trajectory.clockwise else w
    else:
        w = 0.0
    return Pose(x, y, th), BodyVelocity(trajectory.speed, w)


def leader_tracking_command(
    pose: Pose, ref: Pose, ff: BodyVelocity, kx: float = 1.0, ky: float = 25.0, kth: float = 2.0
) -> BodyVelocity:
    """Pose-tracking law that keeps the leader on its reference under Euler integration."""
    dx, dy = ref.x - pose.x, ref.y - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex = c * dx + s * dy
    ey = -s * dx + c * dy
    eth = wrap_angle(ref.theta - pose.theta)
    v = ff.v * math.cos(eth) + kx * ex
    w = ff.w + ff.v * (ky * ey + kth * math.sin(eth))
    return BodyVelocity(v, w)


def slot_world_target(leader_pose: Pose, slot: FormationSlot) -> Pose:
    ang = leader_pose.theta + slot.psi_d
    return Pose(
        leader_pose.x + slot.rho_d * math.cos(ang),
        leader_pose.y + slot.rho_d * math.sin(ang),
        leader_pose.theta,
    )


def control_point(pose: Pose, gains: ControlGains) -> Tuple[float, float]:
    d = gains.center_offset_d_m
    return pose.x + d * math.cos(pose.theta), pose.y + d * math.sin(pose.theta)


def slot_error(leader_pose: Pose, follower_pose: Pose, slot: FormationSlot, gains: ControlGains) -> float:
    """Planar distance between the follower's control point and its slot target."""
    target = slot_world_target(leader_pose, slot)
    px, py = control_point(follower_pose, gains)
    return math.hypot(target.x - px, target.y - py)


def clamp_pair(gain: float, error: float) -> Tuple[float, float]:
    """The ``(f, g)`` split of ``gain * error`` into its positive and negative parts."""
    e = gain * error
    return (e, 0.0) if e > 0.0 else (0.0, -e)


def follower_command(
    leader_pose: Pose,
    leader_vel: BodyVelocity,
    follower_pose: Pose,
    slot: FormationSlot,
    gains: ControlGains,
    ctrl: ControllerState,
    dt: float,
    v_max: float = math.inf,
    w_max: float = math.inf,
) -> Tuple[BodyVelocity, ControllerState]:
    """One step of the follower law; returns the clamped command and the new auxiliary state.

    Tracking errors are the slot target minus the follower's control point,
    resolved in the leader's body frame. The heading error is taken against
    the direction the slot point is moving in (the leader heading when the
    leader is stationary).
    """
    d = gains.center_offset_d_m
    if d == 0.0:
        raise DegenerateGeometry("center_offset_d_m must be non-zero")
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1, k2, k3, k4, k5, k6 = gains.k1, gains.k2, gains.k3, gains.k4, gains.k5, gains.k6

    th_i, th_j = leader_pose.theta, follower_pose.theta
    th_ij = wrap_angle(th_i - th_j)
    psi, rho = slot.psi_d, slot.rho_d
    v_i, w_i = leader_vel

    ang = th_i + psi
    tx = leader_pose.x + rho * math.cos(ang)
    ty = leader_pose.y + rho * math.sin(ang)
    px = follower_pose.x + d * math.cos(th_j)
    py = follower_pose.y + d * math.sin(th_j)
    dx, dy = tx - px, ty - py
    ci, si = math.cos(th_i), math.sin(th_i)
    x_e = ci * dx + si * dy
    y_e = -si * dx + ci * dy

    # slot point velocity in the world frame
    vx = v_i * ci - rho * w_i * math.sin(ang)
    vy = v_i * si + rho * w_i * math.cos(ang)
    if vx * vx + vy * vy > 1e-12:
        th_ref = math.atan2(vy, vx)
        if v_i < 0.0:
            th_ref += math.pi
    else:
        th_ref = th_i
    th_e = wrap_angle(th_ref - th_j)

    alpha, beta = ctrl
    f1, g1 = clamp_pair(k1, x_e)
    f2, g2 = clamp_pair(k2, y_e)
    alpha_new = alpha + dt * (-k4 * alpha + (k5 - alpha) * f1 - (k6 + alpha) * g1)
    beta_new = beta + dt * (-k4 * beta + (k5 - beta) * f2 - (k6 + beta) * g2)

    if gains.bearing_sign == "printed":
        lon_ff = rho * w_i * math.sin(psi - th_ij)
    else:
        lon_ff = rho * w_i * math.sin(psi + th_ij)
    v_j = k1 * alpha_new + v_i * math.cos(th_ij) - lon_ff
    w_j = (v_i * math.sin(th_ij) + rho * w_i * math.cos(psi + th_ij) + k2 * beta_new + k3 * th_e) / d

    v_j = min(max(v_j, -v_max), v_max)
    w_j = min(max(w_j, -w_max), w_max)
    return BodyVelocity(v_j, w_j), ControllerState(alpha_new, beta_new)


def min_separation_ok(poses: Sequence[Pose], min_separation: float) -> bool:
    n = len(poses)
    for a in range(n):
        xa, ya = poses[a].x, poses[a].y
        for b in range(a + 1, n):
            if math.hypot(poses[b].x - xa, poses[b].y - ya) < min_separation:
                return False
    return True


def min_separation(robot_dimension_m: float, delta_m: float = DELTA_LOCALIZATION_M) -> float:
    return robot_dimension_m + delta_m
