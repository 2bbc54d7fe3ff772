import time

import numpy as np
import pytest

from quadcrawl.core import BoxObstacle, TorsoPose, World
from quadcrawl.distance import signed_distance_many
from quadcrawl.nlp import numeric_jacobian
from quadcrawl.planner import (
    CollisionError,
    PlannerConfig,
    Transcription,
    audit_trajectory,
    min_time_rest_to_rest,
    plan,
    plan_2d,
    transcribe,
)
from quadcrawl.scenario import paper_scenario, required_crawl_height


def corridor_world(amax=1.0, vmax=0.5):
    """x-only motion: every other axis pinned, no planar speed cap."""
    lo = np.array([-1.0, 0.0, 0.28, 0.0, -vmax, 0.0, 0.0, 0.0])
    hi = np.array([4.0, 0.0, 0.28, 0.0, vmax, 0.0, 0.0, 0.0])
    return World(state_lower=lo, state_upper=hi, command_lower=[-amax, 0, 0, 0], command_upper=[amax, 0, 0, 0], max_planar_speed=None)


START = TorsoPose(0.0, 0.0, 0.28, 0.0)
GOAL = TorsoPose(3.0, 0.0, 0.28, 0.0)


@pytest.fixture(scope="module")
def paper_plans():
    sc = paper_scenario()
    return sc, plan(sc.start, sc.goal, sc.world), plan_2d(sc.start, sc.goal, sc.world)


def test_dimension_and_constraint_counts():
    cfg = PlannerConfig(knot_count=2)
    prob = transcribe(START, GOAL, World(max_planar_speed=None), cfg)
    assert prob.dimension == 37
    z = np.zeros(37)
    z[0] = 1.0
    assert prob.h(z).size == 8 * 2 + 8 + 8 + 4
    assert prob.g(z).size == 3 + 2


def test_analytic_derivatives_match_numeric():
    sc = paper_scenario()
    tr = Transcription(TorsoPose(0.8, 0.2, 0.28, 0.1), sc.goal, sc.world, PlannerConfig(knot_count=8))
    prob = tr.problem()
    rng = np.random.default_rng(0)
    z = tr.initial_guess() + rng.normal(scale=0.01, size=prob.dimension)
    for analytic, fun in ((prob.jac_h, prob.h), (prob.jac_g, prob.g)):
        a = analytic(z)
        a = a.toarray() if hasattr(a, "toarray") else a
        n = numeric_jacobian(fun, z)
        assert np.max(np.abs(a - n)) <= 1e-4 * max(1.0, np.max(np.abs(n)))
    w = rng.normal(size=prob.g(z).size)
    hess = tr.inequality_hessian(z, w).toarray()
    num = numeric_jacobian(lambda zz: np.asarray(prob.jac_g(zz).T @ w).ravel(), z)
    assert np.max(np.abs(hess - num)) <= 1e-4 * max(1.0, np.max(np.abs(num)))
    lam = rng.normal(size=prob.h(z).size)
    hess = tr.equality_hessian(z, lam).toarray()
    num = numeric_jacobian(lambda zz: np.asarray(prob.jac_h(zz).T @ lam).ravel(), z)
    assert np.max(np.abs(hess - num)) <= 1e-6


def test_one_dimensional_matches_trapezoid_profile():
    t0 = time.perf_counter()
    rep = plan(START, GOAL, corridor_world())
    elapsed = time.perf_counter() - t0
    assert rep.converged
    assert rep.trajectory.total_time == pytest.approx(6.5, rel=0.02)
    assert min_time_rest_to_rest(3.0, 0.5, 1.0) == 6.5
    assert elapsed <= 10.0


def test_triangle_profile_oracle():
    assert min_time_rest_to_rest(0.1, 0.5, 1.0) == pytest.approx(2 * np.sqrt(0.1))
    rep = plan(START, TorsoPose(0.1, 0.0, 0.28, 0.0), corridor_world())
    assert rep.converged
    assert rep.trajectory.total_time == pytest.approx(2 * np.sqrt(0.1), rel=0.02)


def test_larger_acceleration_never_slower():
    times = []
    for amax in (0.5, 0.75, 1.0, 1.5, 2.0):
        rep = plan(START, GOAL, corridor_world(amax=amax))
        assert rep.converged
        times.append(rep.trajectory.total_time)
        assert rep.trajectory.total_time >= min_time_rest_to_rest(3.0, 0.5, amax) * (1 - 1e-3)
    assert all(b <= a + 1e-6 for a, b in zip(times, times[1:]))


def test_start_equals_goal_is_stationary():
    cfg = PlannerConfig()
    rep = plan(START, START, World())
    assert rep.converged
    assert rep.trajectory.total_time == cfg.time_lower
    assert rep.trajectory.states.shape[0] == 2
    assert np.all(rep.trajectory.commands == 0)


def test_collision_at_start_is_rejected():
    sc = paper_scenario()
    with pytest.raises(CollisionError):
        plan(TorsoPose(1.5, 0.0, 0.24, 0.0), sc.goal, sc.world)


def test_paper_scenario_crawls_under_the_table(paper_plans):
    sc, rep, _ = paper_plans
    assert rep.converged
    X = rep.trajectory.states
    under = (X[:, 0] >= 1.3) & (X[:, 0] <= 1.7)
    assert under.any()
    assert X[under, 2].max() <= required_crawl_height(sc.world)
    assert required_crawl_height(sc.world) == pytest.approx(0.19)


def test_paper_scenario_audit(paper_plans):
    sc, rep, _ = paper_plans
    audit = audit_trajectory(rep.trajectory, sc.world)
    assert audit["endpoint_error"] <= 1e-3
    assert audit["max_defect"] <= 1e-5
    assert audit["min_clearance"] >= sc.world.clearance - 5e-3
    assert audit["bound_violation"] <= 1e-6
    # report clearance comes from exact distance at knots and midpoints
    assert rep.min_clearance >= sc.world.clearance - 1e-4
    X = rep.trajectory.states
    np.testing.assert_allclose(X[0, :4], sc.start.as_array(), atol=1e-5)
    np.testing.assert_allclose(X[-1, :4], sc.goal.as_array(), atol=1e-5)
    np.testing.assert_allclose(X[[0, -1], 4:], 0.0, atol=1e-5)


def test_two_dimensional_goes_around_and_is_slower(paper_plans):
    sc, rep3, rep2 = paper_plans
    assert rep2.converged
    X = rep2.trajectory.states
    np.testing.assert_allclose(X[:, 2], sc.start.z)
    near = (X[:, 0] >= 1.3) & (X[:, 0] <= 1.7)
    assert np.all(np.abs(X[near, 1]) >= 0.5)
    assert rep3.trajectory.total_time < rep2.trajectory.total_time


def test_two_dimensional_without_obstacles_matches_3d():
    w = World()
    a = plan(START, GOAL, w)
    b = plan_2d(START, GOAL, w)
    assert a.converged and b.converged
    assert b.trajectory.total_time == pytest.approx(a.trajectory.total_time, rel=0.01)


def test_plan_is_deterministic():
    sc = paper_scenario()
    s = TorsoPose(0.2, -0.4, 0.28, 0.02)
    a = plan(s, sc.goal, sc.world)
    b = plan(s, sc.goal, sc.world)
    assert np.array_equal(a.trajectory.states, b.trajectory.states)


def test_other_obstacle_layout():
    w = World(obstacles=(BoxObstacle([1.0, -2.0, 0.0], [1.4, 0.3, 0.5]),))
    rep = plan(START, GOAL, w)
    assert rep.converged
    audit = audit_trajectory(rep.trajectory, w)
    assert audit["min_clearance"] >= w.clearance - 5e-3
    assert signed_distance_many(rep.trajectory.states[:, :3], w).min() >= w.clearance - 1e-4
