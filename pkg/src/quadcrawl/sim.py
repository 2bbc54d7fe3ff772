"""Deterministic closed-loop testbed.

The torso is a single rigid body with yaw as its only rotation. Legs are
massless: stance feet are pinned to the ground and their joint angles follow
from inverse kinematics; swing joints respond to PD torques through a small
virtual inertia chosen so that the default gains are critically damped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import LEG_NAMES, GroundReactionForce, LegJointState, QuadrupedParams, TorsoPose, World
from .datagen import Dataset
from .distance import signed_distance
from .legs import (
    GaitSchedule,
    SwingPlan,
    UnreachableTarget,
    gait_phase,
    hip_world,
    leg_fk,
    leg_ik,
    nominal_foothold,
    pd_swing_torque,
    raibert_footstep,
    swing_position,
    time_to_phase_end,
    yaw_rotation,
)
from .mpc import MpcConfig, SrbState, build_reference, grf_to_torques, pyramid_residual, solve_grf_mpc
from .policy import MlpModel, guard_velocity, predict_velocity

REACHED, TIMEOUT, FAULT = "reached", "timeout", "fault"
TORSO_Z_MAX = 1.0

TRACE_HEADER = (
    ["time", "x", "y", "z", "yaw", "vx", "vy", "vz", "yaw_rate"]
    + [f"q{i}" for i in range(12)]
    + [f"tau{i}" for i in range(12)]
    + [f"{leg.lower()}_f{axis}" for leg in LEG_NAMES for axis in "xyz"]
    + ["clearance", "mpc_cost"]
)


class SimulationFault(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SimState:
    srb: SrbState
    legs: LegJointState
    feet: np.ndarray
    time: float = 0.0
    stance: tuple = (True, True, True, True)

    def __post_init__(self):
        feet = np.array(self.feet, dtype=float).reshape(4, 3)
        for i, on in enumerate(self.stance):
            if on and feet[i, 2] != 0.0:
                raise ValueError(f"stance foot {LEG_NAMES[i]} is off the ground")
        feet.setflags(write=False)
        object.__setattr__(self, "feet", feet)
        object.__setattr__(self, "stance", tuple(bool(s) for s in self.stance))


def default_swing_inertia(kp: float = 20.0, kd: float = 0.5) -> float:
    """Virtual joint inertia that makes ``kp, kd`` critically damped."""
    return kd * kd / (4.0 * kp)


def _stance_angles(position, yaw, foot, leg, params):
    rel = yaw_rotation(yaw).T @ (foot - hip_world(position, yaw, leg, params))
    q, _ = leg_ik(rel, leg, params)
    return q


def initial_state(start: TorsoPose, params: QuadrupedParams | None = None, stance=(True, True, True, True)) -> SimState:
    """Torso at rest at ``start`` with every foot under its hip."""
    params = params or QuadrupedParams()
    pos = np.array([start.x, start.y, start.z])
    feet = np.array([nominal_foothold(pos, start.yaw, i, params) for i in range(4)])
    q = np.concatenate([_stance_angles(pos, start.yaw, feet[i], i, params) for i in range(4)])
    if not all(stance):
        # lifted feet sit where the legs put them
        for i in range(4):
            if not stance[i]:
                feet[i] = pos + yaw_rotation(start.yaw) @ (params.hip_offsets[i] + leg_fk(q[3 * i : 3 * i + 3], i, params))
    return SimState(SrbState(pos, start.yaw), LegJointState(q, np.zeros(12)), feet, 0.0, stance)


def sim_step(
    state: SimState,
    grf: GroundReactionForce,
    swing_torques,
    dt: float,
    params: QuadrupedParams | None = None,
    swing_inertia: float | None = None,
) -> SimState:
    """Advance one step; stance flags for the new state come from ``grf``.

    Raises :class:`SimulationFault` when the torso leaves ``0 < z < 1`` or a
    pinned foot falls out of its leg's workspace.
    """
    params = params or QuadrupedParams()
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not any(grf.stance):
        raise ValueError("sim_step needs at least one stance foot")
    inertia = swing_inertia if swing_inertia is not None else default_swing_inertia()
    srb = state.srb
    f = grf.forces
    acc = f.sum(axis=0) / params.mass - np.array([0.0, 0.0, params.gravity])
    vel = srb.velocity + dt * acc
    pos = srb.position + dt * vel
    rel = state.feet - srb.position
    torque_z = float(np.sum(rel[:, 0] * f[:, 1] - rel[:, 1] * f[:, 0]))
    yaw_rate = srb.yaw_rate + dt * torque_z / params.inertia_diag[2]
    yaw = srb.yaw + dt * yaw_rate
    new_srb = SrbState(pos, yaw, vel, yaw_rate)
    if not 0.0 < pos[2] < TORSO_Z_MAX:
        raise SimulationFault(f"torso height {pos[2]:.4f} m outside (0, {TORSO_Z_MAX}) at t={state.time + dt:.3f}", state)

    tau = np.asarray(swing_torques, dtype=float).reshape(12)
    q_old, qd_old = state.legs.q, state.legs.qdot
    q = q_old.copy()
    qd = qd_old.copy()
    feet = state.feet.copy()
    R = yaw_rotation(yaw)
    for i in range(4):
        sl = slice(3 * i, 3 * i + 3)
        if grf.stance[i]:
            if not state.stance[i]:
                # touchdown where the swing foot is, projected onto the ground
                feet[i, 2] = 0.0
            try:
                q[sl] = _stance_angles(pos, yaw, feet[i], i, params)
            except UnreachableTarget as exc:
                raise SimulationFault(f"stance leg {LEG_NAMES[i]} overextended at t={state.time + dt:.3f}: {exc}", state) from exc
            qd[sl] = (q[sl] - q_old[sl]) / dt
        else:
            qd[sl] = qd_old[sl] + dt * tau[sl] / inertia
            q[sl] = q_old[sl] + dt * qd[sl]
            lo, hi = params.joint_min[sl], params.joint_max[sl]
            hit = (q[sl] < lo) | (q[sl] > hi)
            q[sl] = np.clip(q[sl], lo, hi)
            qd[sl] = np.where(hit, 0.0, qd[sl])
            feet[i] = pos + R @ (params.hip_offsets[i] + leg_fk(q[sl], i, params))
    return SimState(new_srb, LegJointState(q, qd), feet, state.time + dt, grf.stance)


class NearestSamplePolicy:
    """Velocity of the closest dataset pose (z-scored distance)."""

    def __init__(self, dataset: Dataset):
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        self.scale = np.where(dataset.inputs.std(axis=0) > 1e-12, dataset.inputs.std(axis=0), 1.0)
        self.tree = cKDTree(dataset.inputs / self.scale)
        self.targets = dataset.targets

    def __call__(self, pose) -> np.ndarray:
        _, idx = self.tree.query(np.asarray(pose, dtype=float) / self.scale)
        return self.targets[idx].copy()


@dataclass(frozen=True)
class RolloutConfig:
    mpc: MpcConfig = field(default_factory=MpcConfig)
    gait: GaitSchedule = field(default_factory=GaitSchedule)
    sim_dt: float = 0.001
    control_dt: float = 0.01
    raibert_gain: float = 0.03
    swing_apex: float = 0.06
    kp: float = 20.0
    kd: float = 0.5
    reach_radius: float = 0.15
    reach_speed: float = 0.1
    max_time: float = 60.0

    def __post_init__(self):
        ratio = self.control_dt / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("control_dt must be an integer multiple of sim_dt")


@dataclass
class RolloutResult:
    outcome: str
    ticks: int
    rows: list
    policy_velocities: list
    stance: list
    feet: list
    message: str = ""
    time_to_goal: float = float("nan")

    @property
    def trace(self) -> np.ndarray:
        return np.array(self.rows).reshape(-1, len(TRACE_HEADER))

    def column(self, name: str) -> np.ndarray:
        return self.trace[:, TRACE_HEADER.index(name)]

    @property
    def min_clearance(self) -> float:
        return float(self.column("clearance").min()) if self.rows else float("nan")


def _policy_velocity(policy, pose: np.ndarray, world: World) -> np.ndarray:
    if isinstance(policy, MlpModel):
        return predict_velocity(policy, pose, world)
    return guard_velocity(policy(pose), pose, world)


def _reached(srb: SrbState, goal: TorsoPose, config: RolloutConfig) -> bool:
    d = math.hypot(srb.position[0] - goal.x, srb.position[1] - goal.y)
    return d <= config.reach_radius and float(np.linalg.norm(srb.velocity)) <= config.reach_speed


def _horizon_feet(state: SimState, stance_plan, touchdown, reference, params):
    """World foot positions the MPC should assume at each horizon step."""
    M = stance_plan.shape[0]
    out = np.zeros((M, 4, 3))
    for i in range(4):
        for k in range(M):
            if not stance_plan[k, i]:
                continue
            if state.stance[i] and stance_plan[: k + 1, i].all():
                out[k, i] = state.feet[i]
            elif not state.stance[i] and _first_landing(stance_plan[:, i], k):
                out[k, i] = touchdown[i]
            else:
                ref = reference[max(k - 1, 0)]
                out[k, i] = nominal_foothold(ref.position, ref.yaw, i, params)
    return out


def _first_landing(column, k):
    """True while ``k`` lies in the first stance stretch of ``column``."""
    seen = False
    for j in range(k + 1):
        if column[j]:
            seen = True
        elif seen:
            return False
    return seen


def _switch_contacts(state: SimState, stance, params) -> SimState:
    """Pin newly landed feet where they are (on the ground) and release lifted ones."""
    if tuple(stance) == state.stance:
        return state
    feet = state.feet.copy()
    q = state.legs.q.copy()
    srb = state.srb
    for i in range(4):
        if stance[i] and not state.stance[i]:
            feet[i, 2] = 0.0
            try:
                q[3 * i : 3 * i + 3] = _stance_angles(srb.position, srb.yaw, feet[i], i, params)
            except UnreachableTarget as exc:
                raise SimulationFault(f"leg {LEG_NAMES[i]} cannot land at {feet[i].round(4).tolist()}: {exc}", state) from exc
    return SimState(srb, LegJointState(q, state.legs.qdot), feet, state.time, tuple(stance))


def rollout(
    policy,
    world: World,
    start: TorsoPose,
    goal: TorsoPose,
    params: QuadrupedParams | None = None,
    config: RolloutConfig | None = None,
) -> RolloutResult:
    """Run policy -> reference -> force MPC -> torques -> simulator until done.

    ``policy`` is an :class:`MlpModel` or any callable mapping a pose array
    to a 4-vector velocity. The outcome is ``reached``, ``timeout`` or
    ``fault``.
    """
    params = params or QuadrupedParams()
    config = config or RolloutConfig()
    substeps = int(round(config.control_dt / config.sim_dt))
    gait = config.gait
    inertia = default_swing_inertia(config.kp, config.kd)
    state = initial_state(start, params, _stance_flags(0.0, gait))
    liftoff = [None if state.stance[i] else state.feet[i].copy() for i in range(4)]
    rows, velocities, stances, feet_log = [], [], [], []
    max_ticks = int(math.floor(config.max_time / config.control_dt + 1e-9))
    tick = 0
    while True:
        srb = state.srb
        t = tick * config.control_dt
        clearance = signed_distance(srb.position, world)
        if _reached(srb, goal, config):
            rows.append(_row(t, state, np.zeros(12), np.zeros((4, 3)), clearance, 0.0))
            velocities.append(np.zeros(4))
            stances.append(state.stance)
            feet_log.append(state.feet.copy())
            return RolloutResult(REACHED, tick, rows, velocities, stances, feet_log, time_to_goal=t)
        if tick >= max_ticks:
            return RolloutResult(TIMEOUT, tick, rows, velocities, stances, feet_log, f"goal not reached within {config.max_time} s")
        pose = np.array([*srb.position, srb.yaw])
        v_des = _policy_velocity(policy, pose, world)
        reference = build_reference(v_des, srb, config.mpc)
        M, step = config.mpc.horizon, config.mpc.step
        stance_plan = np.array([_stance_flags(t + k * step, gait) for k in range(M)])
        stance_now = tuple(bool(s) for s in stance_plan[0])
        tick_state = state

        # contacts switch only on control ticks
        touchdown = [None] * 4
        for i in range(4):
            if state.stance[i] and not stance_now[i]:
                liftoff[i] = state.feet[i].copy()
            if not stance_now[i]:
                remaining = time_to_phase_end(t + 1e-9, i, gait)
                base = nominal_foothold(srb.position + remaining * v_des[:3], srb.yaw + remaining * v_des[3], i, params)
                touchdown[i] = raibert_footstep(base, v_des[:2], srb.velocity[:2], gait.stance_time, config.raibert_gain)
        try:
            state = _switch_contacts(state, stance_now, params)
            feet_plan = _horizon_feet(state, stance_plan, touchdown, reference, params)
            mpc = solve_grf_mpc(srb, reference, stance_plan, feet_plan, params, config.mpc)
            grf = mpc.first
            tau_total = grf_to_torques(grf, state.legs, params, srb.yaw)
            for sub in range(substeps):
                ts = t + sub * config.sim_dt
                swing_tau = _swing_torques(state, stance_now, liftoff, touchdown, ts, params, config)
                if sub == 0:
                    tau_total = tau_total + swing_tau
                state = sim_step(state, grf, swing_tau, config.sim_dt, params, inertia)
        except Exception as exc:  # noqa: BLE001 - reported as a fault outcome with its tick
            return RolloutResult(FAULT, tick, rows, velocities, stances, feet_log, f"tick {tick}: {exc}")

        rows.append(_row(t, tick_state, tau_total, grf.forces, clearance, mpc.cost))
        velocities.append(v_des)
        stances.append(stance_now)
        feet_log.append(state.feet.copy())
        tick += 1


def _swing_torques(state: SimState, stance_now, liftoff, touchdown, time, params, config) -> np.ndarray:
    """PD torques driving each swing leg along its interpolated foot path."""
    tau = np.zeros(12)
    gait = config.gait
    for i in range(4):
        if stance_now[i]:
            continue
        phase = min(1.0, max(0.0, 1.0 - time_to_phase_end(time + 1e-9, i, gait) / gait.swing_time))
        start_pt = liftoff[i] if liftoff[i] is not None else state.feet[i]
        target = swing_position(SwingPlan(start_pt, touchdown[i], config.swing_apex, phase))
        rel = yaw_rotation(state.srb.yaw).T @ (target - hip_world(state.srb.position, state.srb.yaw, i, params))
        try:
            q_des, _ = leg_ik(rel, i, params)
        except UnreachableTarget as exc:
            q_des, _ = leg_ik(exc.nearest, i, params)
        sl = slice(3 * i, 3 * i + 3)
        tau[sl] = pd_swing_torque(q_des, state.legs.q[sl], state.legs.qdot[sl], config.kp, config.kd, params.torque_min[sl], params.torque_max[sl])
    return tau


def _stance_flags(time: float, gait: GaitSchedule) -> tuple:
    # the nudge keeps window edges, which fall on control ticks, on the new side
    return tuple(p.stance for p in gait_phase(time + 1e-9, gait))


def _row(t, state: SimState, tau, forces, clearance, cost) -> list:
    return [t, *state.srb.as_vector(), *state.legs.q, *tau, *np.asarray(forces).ravel(), clearance, cost]


def check_trace(result: RolloutResult, params: QuadrupedParams | None = None, mu: float | None = None) -> dict:
    """Re-verify a finished rollout without trusting the controller.

    Counts friction-pyramid violations (> 1e-8 N), torque-limit violations and
    the largest stance-foot displacement while a foot stayed in stance.
    """
    params = params or QuadrupedParams()
    mu = mu if mu is not None else params.mu
    if not result.rows:
        return {"pyramid_violations": 0, "torque_violations": 0, "stance_drift": 0.0, "ticks": 0}
    trace = result.trace
    f0 = TRACE_HEADER.index("fl_fx")
    t0 = TRACE_HEADER.index("tau0")
    pyramid = 0
    torque = 0
    for row in trace:
        forces = row[f0 : f0 + 12].reshape(4, 3)
        pyramid += sum(pyramid_residual(f, mu) > 1e-8 for f in forces)
        tau = row[t0 : t0 + 12]
        torque += int(np.sum((tau < params.torque_min) | (tau > params.torque_max)))
    drift = 0.0
    for k in range(1, len(result.feet)):
        for i in range(4):
            if result.stance[k - 1][i] and result.stance[k][i]:
                drift = max(drift, float(np.max(np.abs(result.feet[k][i] - result.feet[k - 1][i]))))
    dt = np.diff(trace[:, 0])
    uniform = bool(dt.size == 0 or np.allclose(dt, dt[0], rtol=0, atol=1e-12))
    return {
        "pyramid_violations": int(pyramid),
        "torque_violations": torque,
        "stance_drift": drift,
        "ticks": len(result.rows),
        "uniform_ticks": uniform,
    }


def write_trace(result: RolloutResult, path, extra_header: str | None = None) -> None:
    lines = []
    if extra_header:
        lines.append(f"# {extra_header}")
    lines.append(",".join(TRACE_HEADER))
    for row in result.rows:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
