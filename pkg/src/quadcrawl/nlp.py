"""Dense constrained optimization: an augmented-Lagrangian NLP solver and a
small primal active-set QP solver.

Constraint conventions: equalities ``h(z) = 0`` and inequalities ``g(z) >= 0``.
The Lagrangian is ``f + lam @ h - mu @ g`` with ``mu >= 0``; multiplier
vectors are laid out as ``[lam, mu]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import linalg as splinalg

log = logging.getLogger(__name__)

Vector = np.ndarray
Callback = Callable[[Vector], Vector]

CONVERGED = "converged"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


class NumericalFailure(RuntimeError):
    pass


def numeric_jacobian(f: Callback, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``point``, shape (m, n).

    Scalar-valued ``f`` gives a (1, n) row.
    """
    z = np.asarray(point, dtype=float).reshape(-1)
    f0 = np.atleast_1d(np.asarray(f(z), dtype=float))
    if not np.all(np.isfinite(f0)):
        raise NumericalFailure("non-finite function value in numeric_jacobian")
    jac = np.empty((f0.size, z.size))
    for j in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[j] += step
        zm[j] -= step
        fp = np.atleast_1d(np.asarray(f(zp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(zm), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NumericalFailure(f"non-finite function value perturbing component {j}")
        jac[:, j] = (fp - fm) / (2.0 * step)
    return jac


def _empty(_z):
    return np.zeros(0)


@dataclass
class NlpProblem:
    """Smooth NLP ``min f(z)`` s.t. ``h(z) = 0``, ``g(z) >= 0``, ``lower <= z <= upper``.

    Any derivative callback left as ``None`` is replaced by central
    differences with step 1e-6. Jacobian callbacks may return dense arrays
    or scipy sparse matrices. ``objective_hessian`` is optional; when given,
    the solver switches to its Gauss-Newton inner iteration, which also uses
    ``equality_hessian(z, w)`` / ``inequality_hessian(z, w)`` (the Hessian
    of ``w @ h`` / ``w @ g``) when those are supplied.
    """

    dimension: int
    objective: Callable[[Vector], float]
    objective_gradient: Optional[Callback] = None
    objective_hessian: Optional[Callable] = None
    equality_constraints: Callback = _empty
    equality_jacobian: Optional[Callable] = None
    inequality_constraints: Callback = _empty
    inequality_jacobian: Optional[Callable] = None
    variable_lower: Optional[Vector] = None
    variable_upper: Optional[Vector] = None
    equality_hessian: Optional[Callable] = None
    inequality_hessian: Optional[Callable] = None
    fd_step: float = 1e-6

    def __post_init__(self):
        n = self.dimension
        lo = np.full(n, -np.inf) if self.variable_lower is None else np.asarray(self.variable_lower, float)
        hi = np.full(n, np.inf) if self.variable_upper is None else np.asarray(self.variable_upper, float)
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("variable bounds must match the problem dimension")
        if np.any(lo > hi):
            raise ValueError("variable_lower exceeds variable_upper")
        self.variable_lower, self.variable_upper = lo, hi

    def f(self, z):
        return float(self.objective(z))

    def grad(self, z):
        if self.objective_gradient is None:
            return numeric_jacobian(self.objective, z, self.fd_step)[0]
        return np.asarray(self.objective_gradient(z), dtype=float)

    def h(self, z):
        return np.atleast_1d(np.asarray(self.equality_constraints(z), dtype=float))

    def g(self, z):
        return np.atleast_1d(np.asarray(self.inequality_constraints(z), dtype=float))

    def jac_h(self, z):
        if self.equality_jacobian is None:
            return numeric_jacobian(self.equality_constraints, z, self.fd_step)
        return self.equality_jacobian(z)

    def jac_g(self, z):
        if self.inequality_jacobian is None:
            return numeric_jacobian(self.inequality_constraints, z, self.fd_step)
        return self.inequality_jacobian(z)

    def clamp(self, z):
        return np.clip(z, self.variable_lower, self.variable_upper)


@dataclass
class NlpSolution:
    point: Vector
    objective_value: float
    kkt_residual: float
    constraint_violation: float
    iterations: int
    status: str
    multipliers: Vector = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass
class SolverOptions:
    tol_kkt: float = 1e-4
    tol_feas: float = 1e-5
    max_iters: int = 50
    penalty_initial: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    stall_iters: int = 8
    inner_max_iters: int = 3000
    inner: str = "auto"  # "auto" | "lbfgs" | "gauss-newton"


def _tmatvec(jac, v):
    """Compute ``jac.T @ v`` for dense or sparse jac."""
    if sparse.issparse(jac):
        return jac.T @ v
    return np.asarray(jac).T @ v


def constraint_violation(problem: NlpProblem, point) -> float:
    z = np.asarray(point, dtype=float)
    h = problem.h(z)
    g = problem.g(z)
    parts = [0.0]
    if h.size:
        parts.append(float(np.max(np.abs(h))))
    if g.size:
        parts.append(float(np.max(np.maximum(0.0, -g))))
    return max(parts)


def kkt_residual(problem: NlpProblem, point, multipliers) -> float:
    """First-order optimality residual at ``point``.

    Infinity norm of the bound-projected Lagrangian gradient plus the largest
    complementarity/dual-sign violation over the inequalities.
    """
    z = np.asarray(point, dtype=float)
    h = problem.h(z)
    g = problem.g(z)
    multipliers = np.asarray(multipliers, dtype=float).reshape(-1)
    if multipliers.size != h.size + g.size or z.size != problem.dimension:
        raise ValueError(
            f"dimension mismatch: point {z.size} (expected {problem.dimension}), "
            f"multipliers {multipliers.size} (expected {h.size + g.size})"
        )
    lam, mu = multipliers[: h.size], multipliers[h.size :]
    grad = problem.grad(z)
    if h.size:
        grad = grad + _tmatvec(problem.jac_h(z), lam)
    if g.size:
        grad = grad - _tmatvec(problem.jac_g(z), mu)
    projected = np.clip(z - grad, problem.variable_lower, problem.variable_upper) - z
    stationarity = float(np.max(np.abs(projected))) if z.size else 0.0
    comp = 0.0
    if g.size:
        comp = float(np.max(np.abs(mu * g) + np.maximum(0.0, -mu)))
    return stationarity + comp


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("callback returned non-finite values")


def _merit(problem: NlpProblem, z, lam, mu, rho, with_jacobians=False):
    """Augmented Lagrangian value and gradient for fixed multipliers."""
    fz = problem.f(z)
    hz = problem.h(z)
    gz = problem.g(z)
    _check_finite(np.array([fz]), hz, gz)
    shifted = np.maximum(0.0, mu - rho * gz)
    val = fz + lam @ hz + 0.5 * rho * (hz @ hz) + (shifted @ shifted - mu @ mu) / (2.0 * rho)
    grad = problem.grad(z)
    jh = problem.jac_h(z) if hz.size else None
    jg = problem.jac_g(z) if gz.size else None
    if hz.size:
        grad = grad + _tmatvec(jh, lam + rho * hz)
    if gz.size:
        grad = grad - _tmatvec(jg, shifted)
    _check_finite(grad)
    if with_jacobians:
        return val, grad, jh, jg, shifted
    return val, grad


def _gram(jac, rows=None):
    if jac is None:
        return None
    if rows is not None:
        jac = jac[rows]
    if sparse.issparse(jac):
        return (jac.T @ jac).tocsc()
    jac = np.asarray(jac)
    return jac.T @ jac


def _inner_gauss_newton(problem: NlpProblem, z, lam, mu, rho, tol, max_iters):
    """Projected Gauss-Newton minimization of the augmented Lagrangian.

    The model Hessian is the objective Hessian plus ``rho * J'J`` over the
    equalities and the currently penalized inequalities, with adaptive
    Levenberg damping. Variables whose bound is binding (epsilon-active set)
    are frozen for the step, and steps are projected back onto the box with
    an Armijo backtracking search.
    """
    lo, hi = problem.variable_lower, problem.variable_upper
    n = z.size
    damping = 1e-6 * rho
    val, grad, jh, jg, shifted = _merit(problem, z, lam, mu, rho, with_jacobians=True)
    for _ in range(max_iters):
        pg = np.clip(z - grad, lo, hi) - z
        pg_norm = float(np.max(np.abs(pg))) if n else 0.0
        if pg_norm <= tol:
            break
        eps = min(pg_norm, 1e-3)
        binding = ((z <= lo + eps) & (grad > 0)) | ((z >= hi - eps) & (grad < 0)) | (lo == hi)
        free = np.flatnonzero(~binding)
        if free.size == 0:
            break
        H = problem.objective_hessian(z) if problem.objective_hessian is not None else None
        parts = [H, None if jh is None else rho * _gram(jh)]
        if jg is not None and np.any(shifted > 0):
            parts.append(rho * _gram(jg, np.flatnonzero(shifted > 0)))
        if jh is not None and problem.equality_hessian is not None:
            parts.append(problem.equality_hessian(z, lam + rho * problem.h(z)))
        if jg is not None and problem.inequality_hessian is not None and np.any(shifted > 0):
            parts.append(problem.inequality_hessian(z, -shifted))
        terms = [p for p in parts if p is not None]
        any_sparse = any(sparse.issparse(p) for p in terms)
        if any_sparse:
            B = sparse.csc_matrix((n, n))
            for p in terms:
                B = B + (p if sparse.issparse(p) else sparse.csc_matrix(p))
            B = B.tocsc()[free][:, free]
        else:
            B = np.zeros((n, n))
            for p in terms:
                B = B + p
            B = B[np.ix_(free, free)]
        step = np.zeros(n)
        accepted = False
        for _attempt in range(12):
            try:
                if any_sparse:
                    Bd = (B + damping * sparse.identity(free.size, format="csc")).tocsc()
                    d = -splinalg.spsolve(Bd, grad[free])
                else:
                    d = -np.linalg.solve(B + damping * np.eye(free.size), grad[free])
            except (np.linalg.LinAlgError, RuntimeError):
                damping = max(damping * 10, 1e-8)
                continue
            step[:] = 0.0
            step[free] = d
            # binding variables are sent onto the bound they push against
            step[binding] = np.where(grad[binding] > 0, lo[binding], hi[binding]) - z[binding]
            alpha = 1.0
            for _ls in range(20):
                trial = np.clip(z + alpha * step, lo, hi)
                dz = trial - z
                decrease = grad @ dz
                if decrease < 0 and np.all(np.isfinite(trial)):
                    try:
                        tval, tgrad, tjh, tjg, tshift = _merit(problem, trial, lam, mu, rho, with_jacobians=True)
                    except NumericalFailure:
                        tval = np.inf
                    if tval <= val + 1e-4 * decrease:
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                break
            damping = max(damping * 10, 1e-8)
        if not accepted:
            break
        z, val, grad, jh, jg, shifted = trial, tval, tgrad, tjh, tjg, tshift
        if alpha == 1.0:
            damping = max(damping / 10, 1e-12 * rho)
    return z


def solve_nlp(problem: NlpProblem, initial_point, options: SolverOptions | None = None) -> NlpSolution:
    """Augmented-Lagrangian solve with an L-BFGS-B inner loop.

    Each outer iteration minimizes the augmented Lagrangian over the variable
    box for fixed multipliers, then applies first-order multiplier updates.
    The penalty grows by ``penalty_growth`` whenever the constraint
    violation fails to drop by a factor of four.
    """
    opts = options or SolverOptions()
    z = problem.clamp(np.asarray(initial_point, dtype=float).reshape(-1).copy())
    try:
        h = problem.h(z)
        g = problem.g(z)
        _check_finite(np.array([problem.f(z)]), h, g)
    except NumericalFailure:
        return NlpSolution(z, np.nan, np.inf, np.inf, 0, NUMERICAL_FAILURE)
    lam = np.zeros(h.size)
    mu = np.zeros(g.size)
    rho = opts.penalty_initial
    viol = constraint_violation(problem, z)
    best_viol = viol
    stall = 0
    inner_tol = max(opts.tol_kkt * 0.1, 1e-2)
    history = []
    status = MAX_ITERS
    use_newton = opts.inner == "gauss-newton" or (opts.inner == "auto" and problem.objective_hessian is not None)
    kkt = np.inf
    it = 0

    for it in range(1, opts.max_iters + 1):

        def merit(zz, lam=lam, mu=mu, rho=rho):
            return _merit(problem, zz, lam, mu, rho)[:2]

        try:
            if use_newton:
                z = _inner_gauss_newton(problem, z, lam, mu, rho, inner_tol, opts.inner_max_iters)
            else:
                res = optimize.minimize(
                    merit,
                    z,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=optimize.Bounds(problem.variable_lower, problem.variable_upper),
                    options={
                        "maxiter": opts.inner_max_iters,
                        "maxfun": 2 * opts.inner_max_iters,
                        "gtol": inner_tol,
                        "ftol": 1e-15,
                        "maxcor": 20,
                    },
                )
                z = res.x
        except NumericalFailure:
            status = NUMERICAL_FAILURE
            break
        z = problem.clamp(z)
        h = problem.h(z)
        g = problem.g(z)
        lam = lam + rho * h
        mu = np.maximum(0.0, mu - rho * g)
        new_viol = constraint_violation(problem, z)
        kkt = kkt_residual(problem, z, np.concatenate([lam, mu]))
        history.append(
            {"iteration": it, "objective": problem.f(z), "violation": new_viol, "kkt": kkt, "penalty": rho}
        )
        log.debug("auglag %d: f=%.6g viol=%.3g kkt=%.3g rho=%.1e", it, problem.f(z), new_viol, kkt, rho)
        if new_viol <= opts.tol_feas and kkt <= opts.tol_kkt:
            status = CONVERGED
            viol = new_viol
            break
        if new_viol > 0.25 * viol and new_viol > opts.tol_feas:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        if new_viol < 0.5 * best_viol:
            best_viol = new_viol
            stall = 0
        elif new_viol > opts.tol_feas:
            stall += 1
        viol = new_viol
        if stall >= opts.stall_iters and rho >= opts.penalty_max:
            status = INFEASIBLE
            break
        inner_tol = max(opts.tol_kkt * 0.1, inner_tol * 0.1)

    fval = problem.f(z) if status != NUMERICAL_FAILURE else np.nan
    return NlpSolution(
        point=z,
        objective_value=fval,
        kkt_residual=kkt,
        constraint_violation=constraint_violation(problem, z) if status != NUMERICAL_FAILURE else np.inf,
        iterations=it,
        status=status,
        multipliers=np.concatenate([lam, mu]),
        history=history,
    )


@dataclass
class QpResult:
    x: Vector
    objective: float
    active: list
    iterations: int
    multipliers: Vector


class QpInfeasible(RuntimeError):
    pass


def solve_qp(H, c, A_ineq, b_ineq, x0, tol: float = 1e-8, max_iters: int = 500) -> QpResult:
    """Primal active-set solve of ``min 0.5 x'Hx + c'x`` s.t. ``A_ineq x <= b_ineq``.

    ``H`` must be positive definite and ``x0`` feasible. Working-set steps
    follow the textbook primal method with a null-space-free KKT solve.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_ineq, dtype=float).reshape(-1, H.shape[0])
    b = np.asarray(b_ineq, dtype=float).reshape(-1)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(A @ x - b > tol):
        raise QpInfeasible("initial point violates the inequality constraints")
    n = x.size
    slack = b - A @ x
    working = [int(i) for i in np.flatnonzero(np.abs(slack) <= tol)]
    # drop linearly dependent rows from a degenerate start
    kept = []
    for i in working:
        trial = A[kept + [i]]
        if np.linalg.matrix_rank(trial, tol=1e-10) == len(kept) + 1 and len(kept) < n:
            kept.append(i)
    working = kept
    lam = np.zeros(0)

    for it in range(1, max_iters + 1):
        grad = H @ x + c
        m = len(working)
        Aw = A[working]
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = H
        kkt[:n, n:] = Aw.T
        kkt[n:, :n] = Aw
        rhs = np.concatenate([-grad, np.zeros(m)])
        sol = np.linalg.solve(kkt, rhs)
        p = sol[:n]
        lam = sol[n:]
        if np.max(np.abs(p)) <= tol * max(1.0, np.max(np.abs(x))):
            if m == 0 or np.min(lam) >= -tol:
                mult = np.zeros(A.shape[0])
                mult[working] = lam
                return QpResult(x, float(0.5 * x @ H @ x + c @ x), sorted(working), it, mult)
            working.pop(int(np.argmin(lam)))
            continue
        Ap = A @ p
        candidates = Ap > tol
        candidates[working] = False
        alpha = 1.0
        blocking = None
        if np.any(candidates):
            idx = np.flatnonzero(candidates)
            steps = (b[idx] - A[idx] @ x) / Ap[idx]
            j = int(np.argmin(steps))
            if steps[j] < 1.0:
                alpha = max(float(steps[j]), 0.0)
                blocking = int(idx[j])
        x = x + alpha * p
        if blocking is not None:
            working.append(blocking)
    raise RuntimeError(f"active-set QP did not converge in {max_iters} iterations")
