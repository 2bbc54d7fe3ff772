"""Ground-reaction-force MPC on a yaw-only single rigid body.

State ``x = [x, y, z, yaw, vx, vy, vz, yaw_rate]``. Per horizon step the
body integrates semi-implicitly::

    v+ = v + dt * (sum(f) / m - g)           p+ = p + dt * v+
    w+ = w + dt * sum((r - c) x f)_z / Iz    yaw+ = yaw + dt * w+

The horizon is condensed into a dense QP over the stance-foot forces, solved
by the active-set routine in :mod:`quadcrawl.nlp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LEG_NAMES, GroundReactionForce, LegJointState, QuadrupedParams, normalize_yaw
from .legs import leg_jacobian, yaw_rotation
from .nlp import solve_qp


class FreeFallError(ValueError):
    """A horizon step has no foot on the ground."""


class SingularLegError(ValueError):
    pass


@dataclass(frozen=True)
class SrbState:
    position: np.ndarray
    yaw: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.0

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(3)
        vel = np.array(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel)) and math.isfinite(self.yaw) and math.isfinite(self.yaw_rate)):
            raise ValueError("SrbState must be finite")
        pos.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "yaw_rate", float(self.yaw_rate))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, [self.yaw], self.velocity, [self.yaw_rate]])

    @classmethod
    def from_vector(cls, v) -> "SrbState":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3], v[4:7], v[7])


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    step: float = 0.05
    state_weights: tuple = (50.0, 50.0, 50.0, 50.0, 10.0, 10.0, 10.0, 10.0)
    force_weight: float = 1e-3
    # None uses QuadrupedParams.mu
    mu: float | None = None
    max_force_factor: float = 2.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if len(self.state_weights) != 8 or min(self.state_weights) < 0 or self.force_weight < 0:
            raise ValueError("weights must be non-negative (8 state weights)")


def friction_pyramid(mu: float) -> np.ndarray:
    """Rows ``a`` with ``a @ f <= 0`` for an inscribed friction pyramid.

    The first four rows bound ``|fx|`` and ``|fy|`` by ``mu / sqrt(2) * fz``;
    the last row is ``fz >= 0``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    m = mu / math.sqrt(2.0)
    return np.array(
        [
            [1.0, 0.0, -m],
            [-1.0, 0.0, -m],
            [0.0, 1.0, -m],
            [0.0, -1.0, -m],
            [0.0, 0.0, -1.0],
        ]
    )


def pyramid_residual(force, mu: float) -> float:
    """Largest pyramid violation of one foot force (0 when feasible)."""
    return float(max(0.0, np.max(friction_pyramid(mu) @ np.asarray(force, dtype=float))))


@dataclass
class MpcResult:
    forces: list
    cost: float
    predicted: np.ndarray
    qp_iterations: int
    max_pyramid_residual: float

    @property
    def first(self) -> GroundReactionForce:
        return self.forces[0]


def build_reference(velocity, current: SrbState, config: MpcConfig | None = None) -> list[SrbState]:
    """Constant-velocity extrapolation of the current pose over the horizon."""
    config = config or MpcConfig()
    v = np.asarray(velocity, dtype=float).reshape(4)
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity must be finite")
    out = []
    for k in range(1, config.horizon + 1):
        t = k * config.step
        out.append(SrbState(current.position + t * v[:3], current.yaw + t * v[3], v[:3], v[3]))
    return out


def _input_matrix(feet_rel, params: QuadrupedParams) -> np.ndarray:
    """(4, 3n) map from stacked stance forces to [ax, ay, az, yaw_acc]."""
    n = len(feet_rel)
    G = np.zeros((4, 3 * n))
    for i, r in enumerate(feet_rel):
        G[0, 3 * i] = G[1, 3 * i + 1] = G[2, 3 * i + 2] = 1.0 / params.mass
        G[3, 3 * i] = -r[1] / params.inertia_diag[2]
        G[3, 3 * i + 1] = r[0] / params.inertia_diag[2]
    return G


def solve_grf_mpc(
    current: SrbState,
    reference,
    stance,
    foot_positions,
    params: QuadrupedParams | None = None,
    config: MpcConfig | None = None,
) -> MpcResult:
    """Receding-horizon force plan; ``forces[0]`` is the one to execute.

    ``stance`` is (M, 4) booleans and ``foot_positions`` is (4, 3) or
    (M, 4, 3) in the world frame. The force regularizer penalizes the
    deviation from an equal share of body weight across the stance feet.
    """
    params = params or QuadrupedParams()
    config = config or MpcConfig()
    M, dt = config.horizon, config.step
    mu = config.mu if config.mu is not None else params.mu
    if len(reference) != M:
        raise ValueError(f"reference must have {M} states, got {len(reference)}")
    stance = np.asarray(stance, dtype=bool).reshape(-1, 4)
    if stance.shape[0] == 1 and M > 1:
        stance = np.repeat(stance, M, axis=0)
    if stance.shape != (M, 4):
        raise ValueError("stance must be (M, 4)")
    feet = np.asarray(foot_positions, dtype=float)
    if feet.shape == (4, 3):
        feet = np.repeat(feet[None], M, axis=0)
    if feet.shape != (M, 4, 3) or not np.all(np.isfinite(feet)):
        raise ValueError("foot_positions must be finite, shape (4, 3) or (M, 4, 3)")
    for k in range(M):
        if not stance[k].any():
            raise FreeFallError(f"horizon step {k} has no stance foot")

    x0 = current.as_vector()
    ref = np.array([r.as_vector() for r in reference])
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference must be finite")
    # keep yaw references on the same branch as the current yaw
    ref[:, 3] = x0[3] + np.array([normalize_yaw(y - x0[3]) for y in ref[:, 3]])

    A = np.eye(8)
    A[:4, 4:] = dt * np.eye(4)
    E = np.vstack([dt * dt * np.eye(4), dt * np.eye(4)])
    gvec = np.array([0.0, 0.0, -params.gravity, 0.0])

    counts = stance.sum(axis=1)
    offsets = np.concatenate([[0], np.cumsum(3 * counts)])
    nvar = int(offsets[-1])
    S = np.zeros((8 * M, nvar))
    drift = np.zeros((8 * M,))
    x_free = x0.copy()
    blocks = []
    for k in range(M):
        legs = np.flatnonzero(stance[k])
        com = ref[k - 1, :3] if k > 0 else x0[:3]
        G = _input_matrix(feet[k, legs] - com, params)
        blocks.append(E @ G)
        x_free = A @ x_free + E @ gvec
        drift[8 * k : 8 * k + 8] = x_free
    # S[k, j] = A^(k-j) E G_j
    for j in range(M):
        col = blocks[j]
        for k in range(j, M):
            S[8 * k : 8 * k + 8, offsets[j] : offsets[j + 1]] = col
            col = A @ col

    Q = np.tile(np.asarray(config.state_weights, dtype=float), M)
    nominal = np.zeros(nvar)
    for k in range(M):
        share = params.weight / counts[k]
        nominal[offsets[k] + 2 : offsets[k + 1] : 3] = share
    err0 = drift - ref.ravel()
    alpha = config.force_weight
    H = 2.0 * (S.T @ (Q[:, None] * S) + alpha * np.eye(nvar))
    c = 2.0 * (S.T @ (Q * err0) - alpha * nominal)

    pyramid = friction_pyramid(mu)
    fmax = config.max_force_factor * params.weight
    rows = []
    bounds = []
    for i in range(nvar // 3):
        block = np.zeros((6, nvar))
        block[:5, 3 * i : 3 * i + 3] = pyramid
        block[5, 3 * i + 2] = 1.0
        rows.append(block)
        bounds.append([0, 0, 0, 0, 0, fmax])
    Aineq = np.vstack(rows)
    bineq = np.concatenate(bounds).astype(float)
    start = np.zeros(nvar)
    for k in range(M):
        start[offsets[k] + 2 : offsets[k + 1] : 3] = params.weight / counts[k]
    qp = solve_qp(H, c, Aineq, bineq, start, tol=1e-8)
    F = qp.x

    forces = []
    worst = 0.0
    for k in range(M):
        legs = np.flatnonzero(stance[k])
        f = np.zeros((4, 3))
        f[legs] = F[offsets[k] : offsets[k + 1]].reshape(-1, 3)
        # clip round-off below the cone so downstream checks see exact feasibility
        f[legs, 2] = np.maximum(f[legs, 2], 0.0)
        for i in legs:
            worst = max(worst, pyramid_residual(f[i], mu))
        forces.append(GroundReactionForce(f, tuple(bool(s) for s in stance[k])))
    predicted = (drift + S @ F).reshape(M, 8)
    err = predicted - ref
    cost = float(np.sum(Q.reshape(M, 8) * err * err) + alpha * np.sum((F - nominal) ** 2))
    return MpcResult(forces, cost, predicted, qp.iterations, worst)


def grf_to_torques(
    forces: GroundReactionForce,
    legs: LegJointState,
    params: QuadrupedParams | None = None,
    yaw: float = 0.0,
    jacobians=None,
) -> np.ndarray:
    """Joint torques ``-J^T f`` for stance legs, clamped to the torque limits.

    Forces are world-frame ground reactions and are rotated into the torso
    frame first. ``jacobians`` overrides the kinematic Jacobians (testing).
    """
    params = params or QuadrupedParams()
    R = yaw_rotation(yaw)
    tau = np.zeros(12)
    for i in range(4):
        if not forces.stance[i]:
            continue
        J = jacobians[i] if jacobians is not None else leg_jacobian(legs.leg(i)[0], i, params)
        J = np.asarray(J, dtype=float)
        if abs(np.linalg.det(J)) < 1e-9:
            raise SingularLegError(f"leg {LEG_NAMES[i]} is at a singular configuration")
        tau[3 * i : 3 * i + 3] = -J.T @ (R.T @ forces.forces[i])
    return np.clip(tau, params.torque_min, params.torque_max)
