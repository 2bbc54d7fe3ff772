"""Minimum-time torso planning by trapezoidal direct collocation.

The torso is a point-mass double integrator in (x, y, z, yaw). Final time is
a decision variable and knots are uniformly spaced at ``T / N``. Collision
constraints are imposed at every knot and at the cubic-Hermite midpoint of
every interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .core import NOMINAL_HEIGHT, TorsoPose, TorsoTrajectory, World, normalize_yaw
from .distance import signed_distance_many, smooth_signed_distance_many
from .nlp import CONVERGED, NlpProblem, SolverOptions, solve_nlp


class CollisionError(ValueError):
    """Start or goal pose violates the clearance margin."""


@dataclass(frozen=True)
class PlannerConfig:
    knot_count: int = 100
    time_lower: float = 0.1
    time_upper: float = 60.0
    smoothing: float = 0.01
    # shift the smoothed distance down by smoothing/2 so it never overestimates
    conservative: bool = True
    midpoint_collision: bool = True
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(penalty_initial=1e3, inner_max_iters=200))

    def __post_init__(self):
        if self.knot_count < 2:
            raise ValueError("knot_count must be >= 2")
        if not 0 < self.time_lower < self.time_upper:
            raise ValueError("need 0 < time_lower < time_upper")


@dataclass
class PlanReport:
    trajectory: TorsoTrajectory
    min_clearance: float
    max_dynamics_defect: float
    solver_status: str
    iterations: int = 0
    kkt_residual: float = float("nan")
    constraint_violation: float = float("nan")

    @property
    def converged(self) -> bool:
        return self.solver_status == CONVERGED


class Transcription:
    """Index bookkeeping and callbacks for one collocation problem."""

    def __init__(self, start: TorsoPose, goal: TorsoPose, world: World, config: PlannerConfig, planar: bool = False):
        self.world = world
        self.config = config
        self.planar = planar
        self.N = N = config.knot_count
        self.nx = 8 * (N + 1)
        self.nu = 4 * (N + 1)
        self.dimension = 1 + self.nx + self.nu

        s_i = start.as_array()
        s_t = goal.as_array()
        # unwrap goal yaw next to the start so the planner turns the short way
        s_t[3] = s_i[3] + normalize_yaw(s_t[3] - s_i[3])
        self.x_init = np.concatenate([s_i, np.zeros(4)])
        self.x_goal = np.concatenate([s_t, np.zeros(4)])

        eps = world.clearance
        d = signed_distance_many(np.array([s_i[:3], s_t[:3]]), world)
        if d[0] < eps:
            raise CollisionError(f"start pose violates clearance: distance {d[0]:.4f} < {eps}")
        if d[1] < eps:
            raise CollisionError(f"goal pose violates clearance: distance {d[1]:.4f} < {eps}")

        lo = np.empty(self.dimension)
        hi = np.empty(self.dimension)
        lo[0], hi[0] = config.time_lower, config.time_upper
        xl = np.tile(world.state_lower, (N + 1, 1))
        xu = np.tile(world.state_upper, (N + 1, 1))
        ul = np.tile(world.command_lower, (N + 1, 1))
        uu = np.tile(world.command_upper, (N + 1, 1))
        yaw_lo = min(world.state_lower[3], s_i[3], s_t[3])
        yaw_hi = max(world.state_upper[3], s_i[3], s_t[3])
        xl[:, 3], xu[:, 3] = yaw_lo, yaw_hi
        if planar:
            if s_i[2] != s_t[2]:
                raise ValueError("planar planning needs equal start and goal heights")
            xl[:, 2] = xu[:, 2] = s_i[2]
            xl[:, 6] = xu[:, 6] = 0.0
            ul[:, 2] = uu[:, 2] = 0.0
        # boundary conditions are also pinned through the box
        xl[0] = xu[0] = self.x_init
        xl[N] = xu[N] = self.x_goal
        ul[N] = uu[N] = 0.0
        lo[1 : 1 + self.nx], hi[1 : 1 + self.nx] = xl.ravel(), xu.ravel()
        lo[1 + self.nx :], hi[1 + self.nx :] = ul.ravel(), uu.ravel()
        self.lower, self.upper = lo, hi

        self._build_equality_pattern()
        self.n_collision = (N + 1) + (N if config.midpoint_collision else 0)
        self.n_speed = (N + 1) if world.max_planar_speed is not None else 0
        self._cache_key = None
        self._cache = None
        self._margin = 0.5 * config.smoothing if config.conservative else 0.0

    # -- layout -------------------------------------------------------------
    def split(self, z):
        N = self.N
        T = z[0]
        X = z[1 : 1 + self.nx].reshape(N + 1, 8)
        U = z[1 + self.nx :].reshape(N + 1, 4)
        return T, X, U

    def pack(self, T, X, U):
        return np.concatenate([[T], np.asarray(X).ravel(), np.asarray(U).ravel()])

    def xi(self, k, j):
        return 1 + 8 * k + j

    def ui(self, k, j):
        return 1 + self.nx + 4 * k + j

    # -- equalities ---------------------------------------------------------
    def _build_equality_pattern(self):
        N = self.N
        rows, cols = [], []
        r = 0
        # per defect row: x_{k+1}, x_k, T, then the two derivative terms
        for k in range(N):
            for j in range(8):
                if j < 4:
                    deriv = [self.xi(k, j + 4), self.xi(k + 1, j + 4)]
                else:
                    deriv = [self.ui(k, j - 4), self.ui(k + 1, j - 4)]
                for c in [self.xi(k + 1, j), self.xi(k, j), 0] + deriv:
                    rows.append(r)
                    cols.append(c)
                r += 1
        for k in (0, N):
            for j in range(8):
                rows.append(r)
                cols.append(self.xi(k, j))
                r += 1
        for j in range(4):
            rows.append(r)
            cols.append(self.ui(N, j))
            r += 1
        self.n_eq = r
        template = sparse.csr_matrix(
            (np.arange(1, len(rows) + 1, dtype=float), (np.array(rows), np.array(cols))),
            shape=(self.n_eq, self.dimension),
        )
        self._eq_perm = template.data.astype(int) - 1
        self._eq_indices = template.indices
        self._eq_indptr = template.indptr

    def equality(self, z):
        T, X, U = self.split(z)
        N = self.N
        h = T / (2 * N)
        F = np.concatenate([X[:, 4:], U], axis=1)  # (N+1, 8) = dx/dt
        defects = X[1:] - X[:-1] - h * (F[:-1] + F[1:])
        return np.concatenate([defects.ravel(), X[0] - self.x_init, X[N] - self.x_goal, U[N]])

    def equality_jacobian(self, z):
        T, X, U = self.split(z)
        N = self.N
        h = T / (2 * N)
        F = np.concatenate([X[:, 4:], U], axis=1)
        dT = -(F[:-1] + F[1:]) / (2 * N)  # (N, 8)
        block = np.empty((N, 8, 5))
        block[:, :, 0] = 1.0
        block[:, :, 1] = -1.0
        block[:, :, 2] = dT
        block[:, :, 3] = -h
        block[:, :, 4] = -h
        data = np.concatenate([block.ravel(), np.ones(20)])[self._eq_perm]
        return sparse.csr_matrix((data, self._eq_indices, self._eq_indptr), shape=(self.n_eq, self.dimension))

    # -- inequalities -------------------------------------------------------
    def _collision_points(self, z):
        T, X, U = self.split(z)
        N = self.N
        P = X[:, :3]
        if not self.config.midpoint_collision:
            return P, None
        V = X[:, 4:7]
        mid = 0.5 * (P[:-1] + P[1:]) + (T / (8 * N)) * (V[:-1] - V[1:])
        return P, mid

    def _distance(self, z):
        key = z.tobytes()
        if self._cache_key != key:
            P, mid = self._collision_points(z)
            pts = P if mid is None else np.vstack([P, mid])
            self._cache = smooth_signed_distance_many(pts, self.world, self.config.smoothing)
            self._cache_key = key
        return self._cache

    def inequality(self, z):
        dist, _ = self._distance(z)
        parts = [dist - self.world.clearance - self._margin]
        if self.n_speed:
            _, X, _ = self.split(z)
            vmax = self.world.max_planar_speed
            parts.append((vmax**2 - X[:, 4] ** 2 - X[:, 5] ** 2) / (2 * vmax))
        return np.concatenate(parts)

    def inequality_jacobian(self, z):
        T, X, U = self.split(z)
        N = self.N
        _, grad = self._distance(z)
        mid = grad[N + 1 :] if self.config.midpoint_collision else None
        rows, cols, data = [], [], []
        knots = np.arange(N + 1)
        for j in range(3):
            rows.append(knots)
            cols.append(1 + 8 * knots + j)
            data.append(grad[: N + 1, j])
        if mid is not None:
            gm = grad[N + 1 :]
            r = N + 1 + np.arange(N)
            k = np.arange(N)
            c = T / (8 * N)
            for j in range(3):
                rows += [r, r, r, r]
                cols += [1 + 8 * k + j, 1 + 8 * (k + 1) + j, 1 + 8 * k + 4 + j, 1 + 8 * (k + 1) + 4 + j]
                data += [0.5 * gm[:, j], 0.5 * gm[:, j], c * gm[:, j], -c * gm[:, j]]
            rows.append(r)
            cols.append(np.zeros(N, dtype=int))
            data.append(np.sum(gm * (X[:-1, 4:7] - X[1:, 4:7]), axis=1) / (8 * N))
        if self.n_speed:
            vmax = self.world.max_planar_speed
            r = self.n_collision + knots
            rows += [r, r]
            cols += [1 + 8 * knots + 4, 1 + 8 * knots + 5]
            data += [-X[:, 4] / vmax, -X[:, 5] / vmax]
        shape = (self.n_collision + self.n_speed, self.dimension)
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )

    # -- second derivatives ---------------------------------------------------
    def _f_index(self, m, j):
        return self.xi(m, 4 + j) if j < 4 else self.ui(m, j - 4)

    def equality_hessian(self, z, weights):
        """Hessian of ``weights @ h``; only the T-by-derivative couplings are nonzero."""
        N = self.N
        W = np.asarray(weights)[: 8 * N].reshape(N, 8)
        coef = np.zeros((N + 1, 8))
        coef[:-1] += W
        coef[1:] += W
        coef *= -1.0 / (2 * N)
        cols = np.array([[self._f_index(m, j) for j in range(8)] for m in range(N + 1)]).ravel()
        vals = coef.ravel()
        zeros = np.zeros_like(cols)
        return sparse.coo_matrix(
            (np.concatenate([vals, vals]), (np.concatenate([zeros, cols]), np.concatenate([cols, zeros]))),
            shape=(self.dimension, self.dimension),
        ).tocsc()

    def inequality_hessian(self, z, weights):
        """Hessian of ``weights @ g`` with distance Hessians from differenced gradients."""
        T, X, U = self.split(z)
        N = self.N
        weights = np.asarray(weights)
        P, mid = self._collision_points(z)
        pts = P if mid is None else np.vstack([P, mid])
        _, grad = self._distance(z)
        step = 1e-6
        hess = np.empty((pts.shape[0], 3, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            gp = smooth_signed_distance_many(pts + e, self.world, self.config.smoothing)[1]
            gm = smooth_signed_distance_many(pts - e, self.world, self.config.smoothing)[1]
            hess[:, i, :] = (gp - gm) / (2 * step)
        hess = 0.5 * (hess + hess.transpose(0, 2, 1))
        rows, cols, vals = [], [], []

        def add(block_rows, block_cols, block):
            rows.append(np.repeat(block_rows, len(block_cols)))
            cols.append(np.tile(block_cols, len(block_rows)))
            vals.append(block.ravel())

        for k in range(N + 1):
            wk = weights[k]
            if wk == 0.0:
                continue
            idx = np.array([self.xi(k, j) for j in range(3)])
            add(idx, idx, wk * hess[k])
        if mid is not None:
            c = T / (8 * N)
            for k in range(N):
                wk = weights[N + 1 + k]
                if wk == 0.0:
                    continue
                dv = X[k, 4:7] - X[k + 1, 4:7]
                # columns: p_k, p_k+1, v_k, v_k+1, T
                idx = np.array(
                    [self.xi(k, j) for j in range(3)]
                    + [self.xi(k + 1, j) for j in range(3)]
                    + [self.xi(k, 4 + j) for j in range(3)]
                    + [self.xi(k + 1, 4 + j) for j in range(3)]
                    + [0]
                )
                Jm = np.hstack([0.5 * np.eye(3), 0.5 * np.eye(3), c * np.eye(3), -c * np.eye(3), dv[:, None] / (8 * N)])
                block = wk * (Jm.T @ hess[N + 1 + k] @ Jm)
                g = grad[N + 1 + k] * wk / (8 * N)
                block[12, 6:9] += g
                block[6:9, 12] += g
                block[12, 9:12] -= g
                block[9:12, 12] -= g
                add(idx, idx, block)
        if self.n_speed:
            vmax = self.world.max_planar_speed
            ws = weights[self.n_collision :]
            knots = np.arange(N + 1)
            for j in (4, 5):
                rows.append(1 + 8 * knots + j)
                cols.append(1 + 8 * knots + j)
                vals.append(-ws / vmax)
        if not rows:
            return sparse.csc_matrix((self.dimension, self.dimension))
        return sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dimension, self.dimension),
        ).tocsc()

    # -- problem ------------------------------------------------------------
    def problem(self) -> NlpProblem:
        grad = np.zeros(self.dimension)
        grad[0] = 1.0
        hessian = sparse.csc_matrix((self.dimension, self.dimension))
        return NlpProblem(
            dimension=self.dimension,
            objective=lambda z: z[0],
            objective_gradient=lambda z: grad,
            objective_hessian=lambda z: hessian,
            equality_constraints=self.equality,
            equality_jacobian=self.equality_jacobian,
            inequality_constraints=self.inequality,
            inequality_jacobian=self.inequality_jacobian,
            variable_lower=self.lower,
            variable_upper=self.upper,
            equality_hessian=self.equality_hessian,
            inequality_hessian=self.inequality_hessian,
        )

    def initial_guess(self) -> np.ndarray:
        """Constant-speed warm start along a straight line, detoured around obstacles.

        Stretches of the straight line that violate the clearance are replaced
        by a shifted copy, moved out of the obstacle along whichever free
        direction (down, up, or lateral to the start-goal line) needs the
        smallest displacement. The resulting polyline is resampled uniformly
        by arc length.
        """
        N = self.N
        w = self.world
        waypoints = self._waypoints()
        seg = np.linalg.norm(np.diff(waypoints[:, :3], axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        length = arc[-1]
        vmax = w.max_planar_speed
        if vmax is None:
            reach = np.maximum(np.abs(w.state_lower[4:6]), np.abs(w.state_upper[4:6]))
            vmax = float(np.hypot(*reach)) or 1.0
        T = float(np.clip(length / (0.5 * vmax), self.config.time_lower, self.config.time_upper))
        X = np.zeros((N + 1, 8))
        if length > 1e-12:
            target = np.linspace(0.0, length, N + 1)
            for j in range(4):
                X[:, j] = np.interp(target, arc, waypoints[:, j])
            X[1:N, 4:] = np.gradient(X[:, :4], axis=0)[1:N] * N / T
        else:
            s_ = np.linspace(0.0, 1.0, N + 1)[:, None]
            X[:, :4] = (1 - s_) * self.x_init[:4] + s_ * self.x_goal[:4]
        X[1:N, 4:] = np.clip(X[1:N, 4:], w.state_lower[4:], w.state_upper[4:])
        X[0], X[N] = self.x_init, self.x_goal
        if self.planar:
            X[:, 6] = 0.0
        z = self.pack(T, X, np.zeros((N + 1, 4)))
        return np.clip(z, self.lower, self.upper)

    def _waypoints(self):
        w = self.world
        a, b = self.x_init[:4], self.x_goal[:4]
        if not w.obstacles:
            return np.vstack([a, b])
        samples = 4 * self.N + 1
        s_ = np.linspace(0.0, 1.0, samples)[:, None]
        line = (1 - s_) * a + s_ * b
        bad = signed_distance_many(line[:, :3], w) < w.clearance
        if not bad.any():
            return np.vstack([a, b])
        margin = w.clearance + 0.02
        direction = b[:2] - a[:2]
        norm = np.linalg.norm(direction)
        lateral = np.array([0.0, 1.0]) if norm < 1e-12 else np.array([-direction[1], direction[0]]) / norm
        moves = [("lateral", 1.0), ("lateral", -1.0)]
        if not self.planar:
            moves = [("z", -1.0), ("z", 1.0)] + moves
        points = [a]
        idx = np.flatnonzero(bad)
        for seg in np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1):
            ends = line[[max(seg[0] - 1, 0), min(seg[-1] + 1, samples - 1)]]
            best = None
            for axis, sign in moves:
                need = max(self._escape(line[i], axis, sign, lateral, margin) for i in seg)
                shifted = ends.copy()
                if axis == "z":
                    shifted[:, 2] += sign * need
                    ok = np.all((shifted[:, 2] >= w.state_lower[2]) & (shifted[:, 2] <= w.state_upper[2]))
                else:
                    shifted[:, :2] += sign * need * lateral
                    ok = np.all((shifted[:, :2] >= w.state_lower[:2]) & (shifted[:, :2] <= w.state_upper[:2]))
                if ok and (best is None or need < best[0]):
                    best = (need, shifted)
            if best is not None:
                points.extend(best[1])
        points.append(b)
        return np.vstack(points)

    def _escape(self, pose, axis, sign, lateral, margin):
        """Displacement along one direction that clears every box hit by ``pose``."""
        need = 0.0
        for b in self.world.obstacles:
            if signed_distance_many(pose[None, :3], World(obstacles=(b,)))[0] >= self.world.clearance:
                continue
            if axis == "z":
                target = b.min_corner[2] - margin if sign < 0 else b.max_corner[2] + margin
                need = max(need, sign * (target - pose[2]))
            else:
                xs = (b.min_corner[0], b.max_corner[0])
                ys = (b.min_corner[1], b.max_corner[1])
                corners = np.array([[x, y] for x in xs for y in ys])
                proj = corners @ lateral
                target = proj.max() + margin if sign > 0 else proj.min() - margin
                need = max(need, sign * (target - pose[:2] @ lateral))
        return max(need, 0.0)


def transcribe(start: TorsoPose, goal: TorsoPose, world: World, config: PlannerConfig | None = None) -> NlpProblem:
    """Collocation NLP over ``z = [T, x_0..x_N, u_0..u_N]``."""
    return Transcription(start, goal, world, config or PlannerConfig()).problem()


def _integrate_rk4(traj: TorsoTrajectory, substeps: int = 20) -> np.ndarray:
    """Re-integrate the double integrator under piecewise-linear commands."""
    N = traj.knot_count
    x = traj.states[0].copy()
    h = traj.total_time / N
    dt = h / substeps

    def f(state, u):
        return np.concatenate([state[4:], u])

    for k in range(N):
        u0, u1 = traj.commands[k], traj.commands[k + 1]
        for i in range(substeps):
            a = i / substeps
            ua = (1 - a) * u0 + a * u1
            um = (1 - a - 0.5 / substeps) * u0 + (a + 0.5 / substeps) * u1
            ub = (1 - a - 1 / substeps) * u0 + (a + 1 / substeps) * u1
            k1 = f(x, ua)
            k2 = f(x + 0.5 * dt * k1, um)
            k3 = f(x + 0.5 * dt * k2, um)
            k4 = f(x + dt * k3, ub)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def audit_trajectory(traj: TorsoTrajectory, world: World, oversample: int = 10) -> dict:
    """Independent feasibility checks on a finished trajectory.

    Returns the RK4 endpoint error, the max trapezoidal defect, the minimum
    exact clearance on an ``oversample``-times finer cubic-Hermite time grid,
    and the worst bound violation.
    """
    X, U = traj.states, traj.commands
    N = traj.knot_count
    h = traj.total_time / N
    F = np.concatenate([X[:, 4:], U], axis=1)
    defect = X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])
    end = _integrate_rk4(traj)
    s = np.linspace(0, 1, oversample + 1)[:-1]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    P, V = X[:, :3], X[:, 4:7]
    fine = (
        h00[None, :, None] * P[:-1, None]
        + h10[None, :, None] * h * V[:-1, None]
        + h01[None, :, None] * P[1:, None]
        + h11[None, :, None] * h * V[1:, None]
    ).reshape(-1, 3)
    fine = np.vstack([fine, P[-1]])
    clearance = signed_distance_many(fine, world)
    bound_violation = max(
        float(np.max(world.state_lower[[0, 1, 2, 4, 5, 6, 7]] - X[:, [0, 1, 2, 4, 5, 6, 7]], initial=0)),
        float(np.max(X[:, [0, 1, 2, 4, 5, 6, 7]] - world.state_upper[[0, 1, 2, 4, 5, 6, 7]], initial=0)),
        float(np.max(world.command_lower - U, initial=0)),
        float(np.max(U - world.command_upper, initial=0)),
    )
    return {
        "endpoint_error": float(np.max(np.abs(end - X[-1]))),
        "max_defect": float(np.max(np.abs(defect))) if N else 0.0,
        "min_clearance": float(clearance.min()),
        "knot_clearance": float(signed_distance_many(P, world).min()),
        "bound_violation": bound_violation,
    }


def _stationary(start: TorsoPose, config: PlannerConfig) -> TorsoTrajectory:
    x = np.concatenate([start.as_array(), np.zeros(4)])
    return TorsoTrajectory(config.time_lower, np.vstack([x, x]), np.zeros((2, 4)))


def _solve(start, goal, world, config, planar) -> PlanReport:
    if np.allclose(start.as_array(), goal.as_array(), atol=1e-12, rtol=0):
        # still validate clearance
        Transcription(start, goal, world, replace(config, knot_count=2), planar)
        traj = _stationary(start, config)
        d = float(signed_distance_many(traj.states[:, :3], world).min())
        return PlanReport(traj, d, 0.0, CONVERGED, 0, 0.0, 0.0)
    tr = Transcription(start, goal, world, config, planar)
    problem = tr.problem()
    sol = solve_nlp(problem, tr.initial_guess(), config.solver)
    T, X, U = tr.split(sol.point)
    traj = TorsoTrajectory(float(T), X.copy(), U.copy())
    audit = audit_trajectory(traj, world, oversample=2)
    return PlanReport(
        trajectory=traj,
        min_clearance=audit["min_clearance"],
        max_dynamics_defect=audit["max_defect"],
        solver_status=sol.status,
        iterations=sol.iterations,
        kkt_residual=sol.kkt_residual,
        constraint_violation=sol.constraint_violation,
    )


def plan(start: TorsoPose, goal: TorsoPose, world: World, config: PlannerConfig | None = None) -> PlanReport:
    """Minimum-time collision-free torso trajectory from ``start`` to ``goal``.

    ``min_clearance`` in the report is the exact signed distance at knots and
    Hermite midpoints, recomputed from the returned trajectory.
    """
    return _solve(start, goal, world, config or PlannerConfig(), planar=False)


def plan_2d(start: TorsoPose, goal: TorsoPose, world: World, config: PlannerConfig | None = None) -> PlanReport:
    """Same as :func:`plan` with torso height and vertical velocity frozen."""
    return _solve(start, goal, world, config or PlannerConfig(), planar=True)


def min_time_rest_to_rest(distance: float, v_max: float, a_max: float) -> float:
    """Analytic minimum time of a 1-D rest-to-rest move (trapezoid or triangle profile)."""
    if distance <= 0:
        return 0.0
    if distance >= v_max**2 / a_max:
        return distance / v_max + v_max / a_max
    return 2.0 * math.sqrt(distance / a_max)


def default_nominal_height() -> float:
    return NOMINAL_HEIGHT


TRAJECTORY_HEADER = "t,x,y,z,yaw,vx,vy,vz,vyaw,ax,ay,az,ayaw"


def write_trajectory(traj: TorsoTrajectory, path, comment: str | None = None) -> None:
    """One row per knot: time, state (8) and command (4)."""
    lines = [f"# {comment}"] if comment else []
    lines.append(TRAJECTORY_HEADER)
    for t, x, u in zip(traj.times, traj.states, traj.commands):
        lines.append(",".join(repr(float(v)) for v in (t, *x, *u)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory(path) -> TorsoTrajectory:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("t,") or not line.strip():
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    return TorsoTrajectory(float(data[-1, 0]), data[:, 1:9], data[:, 9:13])
