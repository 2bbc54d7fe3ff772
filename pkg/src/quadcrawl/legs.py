"""Gait timing, footstep placement, swing interpolation and 3-DOF leg kinematics.

Leg frame: origin at the hip, axes aligned with the torso. Joints are hip
abduction ``q1`` (about x), hip pitch ``q2`` and knee ``q3`` (both about the
rotated y axis). Forward kinematics::

    p = Rx(q1) @ [-l2 sin q2 - l3 sin(q2 + q3),
                  s l1,
                  -l2 cos q2 - l3 cos(q2 + q3)]

with ``s = +1`` for left legs and ``-1`` for right legs. The knee bends
backwards (``q3 <= 0``). The exact workspace is the set of points with
``y^2 + z^2 >= l1^2`` and ``(l2 - l3)^2 <= |p|^2 - l1^2 <= (l2 + l3)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LEG_NAMES, NOMINAL_HEIGHT, QuadrupedParams

LEFT = (True, False, True, False)


class UnreachableTarget(ValueError):
    def __init__(self, message, nearest):
        super().__init__(message)
        self.nearest = nearest


@dataclass(frozen=True)
class GaitSchedule:
    """Per-leg stance window ``[offset, offset + duty)`` on the unit phase circle."""

    cycle_time: float = 0.6
    duty: float = 0.6
    offsets: tuple = (0.0, 0.5, 0.5, 0.0)

    def __post_init__(self):
        if not self.cycle_time > 0:
            raise ValueError("cycle_time must be positive")
        if not 0 < self.duty < 1:
            raise ValueError("duty must be in (0, 1)")
        if len(self.offsets) != 4:
            raise ValueError("one offset per leg")

    @property
    def stance_time(self) -> float:
        return self.duty * self.cycle_time

    @property
    def swing_time(self) -> float:
        return (1.0 - self.duty) * self.cycle_time


@dataclass(frozen=True)
class LegPhase:
    stance: bool
    phase: float


def gait_phase(time: float, schedule: GaitSchedule | None = None) -> tuple[LegPhase, ...]:
    """Stance flag and fraction of the current stance or swing window per leg."""
    schedule = schedule or GaitSchedule()
    if time < 0:
        raise ValueError("time must be >= 0")
    cycle = (time / schedule.cycle_time) % 1.0
    out = []
    for offset in schedule.offsets:
        # measure from the start of this leg's stance window
        phi = (cycle - offset) % 1.0
        if phi < schedule.duty:
            out.append(LegPhase(True, phi / schedule.duty))
        else:
            out.append(LegPhase(False, (phi - schedule.duty) / (1.0 - schedule.duty)))
    return tuple(out)


def time_to_phase_end(time: float, leg: int, schedule: GaitSchedule) -> float:
    """Seconds until the current stance or swing window of ``leg`` ends."""
    p = gait_phase(time, schedule)[leg]
    window = schedule.stance_time if p.stance else schedule.swing_time
    return (1.0 - p.phase) * window


def raibert_footstep(hip_position, desired_velocity, actual_velocity, stance_duration: float, gain: float = 0.03, ground: float = 0.0):
    """Touchdown target: hip projection plus half a stance of motion plus velocity feedback."""
    hip = np.asarray(hip_position, dtype=float)
    vd = np.asarray(desired_velocity, dtype=float)[:2]
    va = np.asarray(actual_velocity, dtype=float)[:2]
    xy = hip[:2] + 0.5 * stance_duration * vd + gain * (va - vd)
    return np.array([xy[0], xy[1], ground])


@dataclass(frozen=True)
class SwingPlan:
    liftoff: np.ndarray
    touchdown: np.ndarray
    apex: float = 0.06
    phase: float = 0.0

    def __post_init__(self):
        if not self.apex > 0:
            raise ValueError("apex height must be positive")


def swing_position(plan: SwingPlan) -> np.ndarray:
    """Smoothstep in the plane, half-sine lift on top of the endpoint blend."""
    if not 0.0 <= plan.phase <= 1.0:
        raise ValueError(f"phase must be in [0, 1], got {plan.phase}")
    a = np.asarray(plan.liftoff, dtype=float)
    b = np.asarray(plan.touchdown, dtype=float)
    s = plan.phase
    blend = s * s * (3.0 - 2.0 * s)
    p = a + blend * (b - a)
    p[2] = (1.0 - blend) * a[2] + blend * b[2] + plan.apex * math.sin(math.pi * s)
    if s == 0.0:
        return a.copy()
    if s == 1.0:
        return b.copy()
    return p


def _side(leg: int) -> float:
    return 1.0 if LEFT[leg] else -1.0


def leg_fk(q, leg: int, params: QuadrupedParams | None = None) -> np.ndarray:
    """Foot position in the hip frame."""
    params = params or QuadrupedParams()
    l1, l2, l3 = params.link_lengths
    q1, q2, q3 = (float(v) for v in q)
    s = _side(leg)
    px = -l2 * math.sin(q2) - l3 * math.sin(q2 + q3)
    pz = -l2 * math.cos(q2) - l3 * math.cos(q2 + q3)
    py = s * l1
    c, sn = math.cos(q1), math.sin(q1)
    return np.array([px, c * py - sn * pz, sn * py + c * pz])


def leg_jacobian(q, leg: int, params: QuadrupedParams | None = None) -> np.ndarray:
    """d(foot position)/dq in the hip frame, shape (3, 3)."""
    params = params or QuadrupedParams()
    l1, l2, l3 = params.link_lengths
    q1, q2, q3 = (float(v) for v in q)
    s = _side(leg)
    s2, c2 = math.sin(q2), math.cos(q2)
    s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
    c, sn = math.cos(q1), math.sin(q1)
    py = s * l1
    pz = -l2 * c2 - l3 * c23
    dpx = np.array([0.0, -l2 * c2 - l3 * c23, -l3 * c23])
    dpz = np.array([0.0, l2 * s2 + l3 * s23, l3 * s23])
    J = np.empty((3, 3))
    J[0] = dpx
    J[1] = -sn * dpz
    J[2] = c * dpz
    J[1, 0] = -sn * py - c * pz
    J[2, 0] = c * py - sn * pz
    return J


def nearest_reachable(target, leg: int, params: QuadrupedParams | None = None) -> np.ndarray:
    """Closest point of the leg workspace along the abduction-plane projection."""
    params = params or QuadrupedParams()
    l1, l2, l3 = params.link_lengths
    p = np.asarray(target, dtype=float)
    ryz = math.hypot(p[1], p[2])
    if ryz < l1:
        # push radially out of the inner cylinder
        direction = np.array([p[1], p[2]]) / ryz if ryz > 1e-12 else np.array([0.0, -1.0])
        p = np.array([p[0], *(direction * l1)])
        ryz = l1
    D = math.sqrt(max(ryz * ryz - l1 * l1, 0.0))
    L = math.hypot(p[0], D)
    L_clamped = min(max(L, abs(l2 - l3) + 1e-9), l2 + l3)
    if L > 0:
        px, D = p[0] * L_clamped / L, D * L_clamped / L
    else:
        px, D = 0.0, L_clamped
    q1 = math.atan2(p[2], p[1]) - math.atan2(-D, _side(leg) * l1)
    c, sn = math.cos(q1), math.sin(q1)
    return np.array([px, c * _side(leg) * l1 + sn * D, sn * _side(leg) * l1 - c * D])


def leg_ik(target, leg: int, params: QuadrupedParams | None = None):
    """Joint angles reaching ``target`` (hip frame), clamped to joint limits.

    Returns ``(q, clamped)``. Raises :class:`UnreachableTarget` (with the
    nearest reachable point attached) outside the workspace.
    """
    params = params or QuadrupedParams()
    l1, l2, l3 = params.link_lengths
    p = np.asarray(target, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("target must be finite")
    s = _side(leg)
    ryz2 = p[1] ** 2 + p[2] ** 2
    reach2 = ryz2 - l1 * l1 + p[0] ** 2
    tol = 1e-12
    if ryz2 < l1 * l1 - tol or reach2 > (l2 + l3) ** 2 + tol or reach2 < (l2 - l3) ** 2 - tol:
        nearest = nearest_reachable(p, leg, params)
        raise UnreachableTarget(
            f"leg {LEG_NAMES[leg]}: target {p.round(4).tolist()} outside the workspace; "
            f"nearest reachable point {nearest.round(4).tolist()}",
            nearest,
        )
    lo = params.joint_min[3 * leg : 3 * leg + 3]
    hi = params.joint_max[3 * leg : 3 * leg + 3]
    root = math.sqrt(max(ryz2 - l1 * l1, 0.0))
    cos_q3 = (p[0] ** 2 + root * root - l2 * l2 - l3 * l3) / (2 * l2 * l3)
    q3 = -math.acos(min(1.0, max(-1.0, cos_q3)))
    best = None
    # foot below the hip first; the flipped branch covers feet raised above it
    for D in (root, -root):
        q1 = math.remainder(math.atan2(p[2], p[1]) - math.atan2(-D, s * l1), 2 * math.pi)
        q2 = math.atan2(-p[0], D) - math.atan2(l3 * math.sin(q3), l2 + l3 * math.cos(q3))
        q = np.array([q1, q2, q3])
        qc = np.clip(q, lo, hi)
        excess = float(np.sum(np.abs(qc - q)))
        if best is None or excess < best[0]:
            best = (excess, qc, bool(np.any(qc != q)))
        if excess == 0.0:
            break
    return best[1], best[2]


def nominal_joint_angles(height: float = NOMINAL_HEIGHT, params: QuadrupedParams | None = None) -> np.ndarray:
    """Joint triple with the foot straight below the hip (offset laterally by l1)."""
    params = params or QuadrupedParams()
    l1, l2, l3 = params.link_lengths
    q, _ = leg_ik([0.0, l1, -height], 0, params)
    return q


def pd_swing_torque(q_desired, q, qdot, kp: float = 20.0, kd: float = 0.5, torque_min=-33.5, torque_max=33.5) -> np.ndarray:
    tau = kp * (np.asarray(q_desired, float) - np.asarray(q, float)) - kd * np.asarray(qdot, float)
    return np.clip(tau, torque_min, torque_max)


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def hip_world(position, yaw: float, leg: int, params: QuadrupedParams) -> np.ndarray:
    return np.asarray(position, dtype=float) + yaw_rotation(yaw) @ params.hip_offsets[leg]


def nominal_foothold(position, yaw: float, leg: int, params: QuadrupedParams) -> np.ndarray:
    """Ground point under the hip, pushed out sideways by the abduction link."""
    R = yaw_rotation(yaw)
    p = np.asarray(position, dtype=float) + R @ (params.hip_offsets[leg] + np.array([0.0, _side(leg) * params.link_lengths[0], 0.0]))
    p[2] = 0.0
    return p
