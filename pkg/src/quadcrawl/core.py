"""Shared value types for the torso planner, policy, controller and simulator.

Units are SI everywhere. Leg and foot arrays are always ordered FL, FR, RL, RR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LEG_NAMES = ("FL", "FR", "RL", "RR")
NOMINAL_HEIGHT = 0.28


def normalize_yaw(angle: float) -> float:
    """Wrap an angle into (-pi, pi]; -pi maps to +pi."""
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"yaw must be finite, got {angle}")
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _vec(values, size: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TorsoPose:
    x: float
    y: float
    z: float
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose.{name} must be finite")
        if self.z <= 0:
            raise ValueError(f"pose.z must be positive, got {self.z}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw])

    @classmethod
    def from_array(cls, values) -> "TorsoPose":
        x, y, z, yaw = (float(v) for v in np.asarray(values, dtype=float).reshape(4))
        return cls(x, y, z, yaw)


@dataclass(frozen=True)
class TorsoState:
    """Torso pose plus twist (vx, vy, vz, yaw rate)."""

    pose: TorsoPose
    twist: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "twist", _vec(self.twist, 4, "twist"))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pose.as_array(), self.twist])

    @classmethod
    def from_array(cls, values) -> "TorsoState":
        values = np.asarray(values, dtype=float).reshape(8)
        return cls(TorsoPose.from_array(values[:4]), values[4:].copy())


@dataclass(frozen=True)
class TorsoCommand:
    accel: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "accel", _vec(self.accel, 4, "accel"))


@dataclass(frozen=True)
class TorsoTrajectory:
    """Uniformly spaced knots of a planned torso motion.

    ``states`` is (N+1, 8) with rows [x, y, z, yaw, vx, vy, vz, yaw_rate];
    ``commands`` is (N+1, 4). Yaw is kept unwrapped along the trajectory so
    that velocities stay consistent with positions.
    """

    total_time: float
    states: np.ndarray
    commands: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        commands = np.array(self.commands, dtype=float)
        if states.ndim != 2 or states.shape[1] != 8 or states.shape[0] < 2:
            raise ValueError(f"states must be (N+1, 8) with N >= 1, got {states.shape}")
        if commands.shape != (states.shape[0], 4):
            raise ValueError(f"commands must be ({states.shape[0]}, 4), got {commands.shape}")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(commands))):
            raise ValueError("trajectory has non-finite entries")
        if not math.isfinite(self.total_time) or self.total_time < 0:
            raise ValueError(f"total_time must be finite and >= 0, got {self.total_time}")
        states.setflags(write=False)
        commands.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "commands", commands)

    @property
    def knot_count(self) -> int:
        """Number of intervals N."""
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.states.shape[0])

    def knot(self, k: int) -> tuple[float, TorsoState, TorsoCommand]:
        return (
            float(self.times[k]),
            TorsoState.from_array(self.states[k]),
            TorsoCommand(self.commands[k]),
        )


@dataclass(frozen=True)
class BoxObstacle:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = _vec(self.min_corner, 3, "min_corner")
        hi = _vec(self.max_corner, 3, "max_corner")
        if not np.all(lo < hi):
            raise ValueError(f"box corners must satisfy min < max, got {lo} / {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def half_extent(self) -> np.ndarray:
        return 0.5 * (self.max_corner - self.min_corner)


@dataclass(frozen=True)
class World:
    """Obstacles, state/command boxes and the clearance margin.

    State bounds follow the layout [x, y, z, yaw, vx, vy, vz, yaw_rate].
    ``max_planar_speed`` additionally caps sqrt(vx**2 + vy**2); ``None``
    leaves only the per-axis boxes.
    """

    obstacles: tuple = ()
    state_lower: np.ndarray = field(
        default_factory=lambda: np.array([-2.0, -3.0, 0.12, -math.pi, -0.5, -0.5, -0.3, -1.0])
    )
    state_upper: np.ndarray = field(
        default_factory=lambda: np.array([5.0, 3.0, NOMINAL_HEIGHT, math.pi, 0.5, 0.5, 0.3, 1.0])
    )
    command_lower: np.ndarray = field(default_factory=lambda: -np.ones(4))
    command_upper: np.ndarray = field(default_factory=lambda: np.ones(4))
    clearance: float = 0.04
    max_planar_speed: float | None = 0.5

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for name, size in (
            ("state_lower", 8),
            ("state_upper", 8),
            ("command_lower", 4),
            ("command_upper", 4),
        ):
            object.__setattr__(self, name, _vec(getattr(self, name), size, name))
        if not np.all(self.state_lower <= self.state_upper):
            raise ValueError("state_lower must not exceed state_upper")
        if not np.all(self.command_lower <= self.command_upper):
            raise ValueError("command_lower must not exceed command_upper")
        if not (self.clearance >= 0):
            raise ValueError(f"clearance must be >= 0, got {self.clearance}")
        if self.max_planar_speed is not None and not self.max_planar_speed > 0:
            raise ValueError("max_planar_speed must be positive or None")

    @property
    def velocity_lower(self) -> np.ndarray:
        return self.state_lower[4:]

    @property
    def velocity_upper(self) -> np.ndarray:
        return self.state_upper[4:]


@dataclass(frozen=True)
class QuadrupedParams:
    """Rigid-body and leg parameters shared by controller, legs and simulator."""

    mass: float = 12.0
    inertia_diag: np.ndarray = field(default_factory=lambda: np.array([0.07, 0.26, 0.28]))
    hip_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.19, 0.05, 0.0],
                [0.19, -0.05, 0.0],
                [-0.19, 0.05, 0.0],
                [-0.19, -0.05, 0.0],
            ]
        )
    )
    link_lengths: tuple = (0.08, 0.21, 0.21)
    torque_min: np.ndarray = field(default_factory=lambda: np.full(12, -33.5))
    torque_max: np.ndarray = field(default_factory=lambda: np.full(12, 33.5))
    joint_min: np.ndarray = field(
        default_factory=lambda: np.tile([-0.8, -1.6, -2.7], 4).astype(float)
    )
    joint_max: np.ndarray = field(
        default_factory=lambda: np.tile([0.8, 1.6, 0.0], 4).astype(float)
    )
    mu: float = 0.6
    gravity: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag", _vec(self.inertia_diag, 3, "inertia_diag"))
        hips = np.array(self.hip_offsets, dtype=float)
        if hips.shape != (4, 3):
            raise ValueError(f"hip_offsets must be 4x3, got {hips.shape}")
        hips.setflags(write=False)
        object.__setattr__(self, "hip_offsets", hips)
        for name in ("torque_min", "torque_max", "joint_min", "joint_max"):
            object.__setattr__(self, name, _vec(getattr(self, name), 12, name))
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        if self.mass <= 0 or np.any(self.inertia_diag <= 0) or self.mu <= 0:
            raise ValueError("mass, inertia and mu must be positive")
        if not np.all(self.torque_min < self.torque_max):
            raise ValueError("torque_min must be below torque_max")
        if not np.all(self.joint_min < self.joint_max):
            raise ValueError("joint_min must be below joint_max")
        if len(self.link_lengths) != 3 or min(self.link_lengths) <= 0:
            raise ValueError("link_lengths must be three positive lengths")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


@dataclass(frozen=True)
class LegJointState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(12))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(12))

    def __post_init__(self):
        object.__setattr__(self, "q", _vec(self.q, 12, "q"))
        object.__setattr__(self, "qdot", _vec(self.qdot, 12, "qdot"))

    def leg(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.q[3 * i : 3 * i + 3], self.qdot[3 * i : 3 * i + 3]


@dataclass(frozen=True)
class GroundReactionForce:
    """World-frame contact forces, one row per foot."""

    forces: np.ndarray
    stance: tuple = (True, True, True, True)

    def __post_init__(self):
        forces = np.array(self.forces, dtype=float).reshape(4, 3)
        if not np.all(np.isfinite(forces)):
            raise ValueError("forces must be finite")
        stance = tuple(bool(s) for s in self.stance)
        if len(stance) != 4:
            raise ValueError("stance needs one flag per foot")
        for i, on in enumerate(stance):
            if not on and np.any(forces[i] != 0.0):
                raise ValueError(f"swing foot {LEG_NAMES[i]} carries a nonzero force")
            if on and forces[i, 2] < -1e-9:
                raise ValueError(f"stance foot {LEG_NAMES[i]} pulls on the ground")
        forces.setflags(write=False)
        object.__setattr__(self, "forces", forces)
        object.__setattr__(self, "stance", stance)

    @property
    def total(self) -> np.ndarray:
        return self.forces.sum(axis=0)


@dataclass(frozen=True)
class VelocitySample:
    input: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input", _vec(self.input, 4, "input"))
        object.__setattr__(self, "target", _vec(self.target, 4, "target"))
