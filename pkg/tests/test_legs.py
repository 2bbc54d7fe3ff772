import math

import numpy as np
import pytest

from quadcrawl.core import QuadrupedParams
from quadcrawl.legs import (
    GaitSchedule,
    SwingPlan,
    UnreachableTarget,
    gait_phase,
    leg_fk,
    leg_ik,
    leg_jacobian,
    nominal_joint_angles,
    pd_swing_torque,
    raibert_footstep,
    swing_position,
    time_to_phase_end,
)

P = QuadrupedParams()
L1, L2, L3 = P.link_lengths


def test_phase_at_zero_matches_offsets():
    phases = gait_phase(0.0)
    # duty 0.6 with offset 0.5 overlaps the wrap: all four feet are down at t = 0
    assert [p.stance for p in phases] == [True] * 4
    assert phases[0].phase == 0.0
    assert phases[1].phase == pytest.approx(0.5 / 0.6)
    later = gait_phase(0.1 * 0.6)
    assert [p.stance for p in later] == [True, False, False, True]
    assert later[1].phase == 0.0


def test_phase_is_periodic():
    s = GaitSchedule()
    for t in (0.0, 0.13, 0.47, 1.01):
        for a, b in zip(gait_phase(t, s), gait_phase(t + s.cycle_time, s)):
            assert a.stance == b.stance
            assert a.phase == pytest.approx(b.phase, abs=1e-9)


def test_trot_keeps_support_every_millisecond():
    s = GaitSchedule()
    for ms in range(600):
        ph = gait_phase(ms / 1000.0, s)
        assert 0.0 <= min(p.phase for p in ph) and max(p.phase for p in ph) < 1.0
        # one diagonal pair is always fully down
        assert (ph[0].stance and ph[3].stance) or (ph[1].stance and ph[2].stance)
        assert sum(p.stance for p in ph) >= 2
        # diagonal legs move together
        assert ph[0].stance == ph[3].stance and ph[1].stance == ph[2].stance


def test_time_to_phase_end():
    s = GaitSchedule()
    assert time_to_phase_end(0.0, 0, s) == pytest.approx(0.36)
    assert time_to_phase_end(0.0, 1, s) == pytest.approx(0.06)
    assert time_to_phase_end(0.1, 1, s) == pytest.approx(0.2)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        gait_phase(-0.1)


def test_raibert_under_hip_when_still():
    np.testing.assert_allclose(raibert_footstep([0.4, 0.2, 0.28], [0, 0], [0, 0], 0.36), [0.4, 0.2, 0.0])


def test_raibert_feedforward_offset():
    t = raibert_footstep([0.0, 0.0, 0.28], [1.0, 0.0], [1.0, 0.0], 0.3, gain=0.0)
    np.testing.assert_allclose(t, [0.15, 0.0, 0.0])


def test_raibert_feedback_offset():
    base = raibert_footstep([0, 0, 0.28], [0.2, 0.0], [0.2, 0.0], 0.3)
    fb = raibert_footstep([0, 0, 0.28], [0.2, 0.0], [0.7, 0.0], 0.3)
    np.testing.assert_allclose(fb - base, [0.015, 0.0, 0.0], atol=1e-15)


def test_swing_endpoints_and_midpoint():
    a, b = np.array([0.1, 0.2, 0.0]), np.array([0.3, 0.1, 0.0])
    np.testing.assert_array_equal(swing_position(SwingPlan(a, b, 0.06, 0.0)), a)
    np.testing.assert_array_equal(swing_position(SwingPlan(a, b, 0.06, 1.0)), b)
    mid = swing_position(SwingPlan(a, b, 0.06, 0.5))
    np.testing.assert_allclose(mid[:2], (a[:2] + b[:2]) / 2, atol=1e-15)
    assert mid[2] == pytest.approx(0.06)


def test_swing_is_continuous_at_ends():
    a, b = np.array([0.1, 0.2, 0.0]), np.array([0.3, 0.1, 0.0])
    assert np.linalg.norm(swing_position(SwingPlan(a, b, 0.06, 1e-12)) - a) <= 1e-9
    assert np.linalg.norm(swing_position(SwingPlan(a, b, 0.06, 1 - 1e-12)) - b) <= 1e-9


def test_swing_rejects_bad_input():
    with pytest.raises(ValueError):
        SwingPlan(np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        swing_position(SwingPlan(np.zeros(3), np.zeros(3), 0.05, 1.5))


def test_nominal_joint_triple():
    q = nominal_joint_angles()
    # knee at 2 * hip-pitch with cos(q2) = h / (l2 + l3)
    q2 = math.acos(0.28 / (L2 + L3))
    np.testing.assert_allclose(q, [0.0, q2, -2 * q2], atol=1e-12)
    np.testing.assert_allclose(q, [0.0, 0.84107, -1.68214], atol=1e-5)
    np.testing.assert_allclose(leg_fk(q, 0), [0.0, L1, -0.28], atol=1e-12)


def random_reachable(rng, leg):
    """Targets from joint angles well inside the limits, so no clamping is needed."""
    lo = np.array([-0.7, -1.4, -2.6])
    hi = np.array([0.7, 1.4, -0.2])
    return leg_fk(rng.uniform(lo, hi), leg)


def test_fk_ik_round_trip():
    rng = np.random.default_rng(0)
    worst = 0.0
    for n in range(1000):
        leg = n % 4
        p = random_reachable(rng, leg)
        q, clamped = leg_ik(p, leg)
        assert not clamped
        worst = max(worst, np.linalg.norm(leg_fk(q, leg) - p))
    assert worst <= 1e-6


def test_ik_boundary_is_fully_extended():
    target = [0.0, -L1, -(L2 + L3)]
    q, clamped = leg_ik(target, 1)
    assert not clamped
    assert q[2] == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(leg_fk(q, 1), target, atol=1e-6)


def test_ik_unreachable_reports_nearest():
    with pytest.raises(UnreachableTarget) as err:
        leg_ik([0.0, L1, -0.6], 0)
    nearest = err.value.nearest
    assert np.linalg.norm(nearest) <= math.hypot(L1, L2 + L3) + 1e-9
    q, _ = leg_ik(nearest, 0)
    np.testing.assert_allclose(leg_fk(q, 0), nearest, atol=1e-6)


def test_ik_output_within_joint_limits():
    rng = np.random.default_rng(1)
    for n in range(300):
        leg = n % 4
        q_raw = rng.uniform([-1.5, -2.5, -3.0], [1.5, 2.5, 0.0])
        q, _ = leg_ik(leg_fk(q_raw, leg), leg)
        assert np.all(q >= P.joint_min[3 * leg : 3 * leg + 3]) and np.all(q <= P.joint_max[3 * leg : 3 * leg + 3])


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for n in range(100):
        leg = n % 4
        q = rng.uniform([-0.8, -1.6, -2.7], [0.8, 1.6, 0.0])
        J = leg_jacobian(q, leg)
        fd = np.column_stack([(leg_fk(q + h * e, leg) - leg_fk(q - h * e, leg)) / (2 * h) for e in np.eye(3)])
        assert np.linalg.norm(J - fd) <= 1e-5 * np.linalg.norm(fd)


def test_straight_leg_is_singular():
    assert abs(np.linalg.det(leg_jacobian([0.2, 0.3, 0.0], 0))) < 1e-6
    assert abs(np.linalg.det(leg_jacobian(nominal_joint_angles(), 0))) > 1e-3


def test_abduction_column_is_tangent():
    for leg in range(4):
        q = np.array([0.0, 0.4, -0.9])
        p = leg_fk(q, leg)
        col = leg_jacobian(q, leg)[:, 0]
        assert col[0] == 0.0
        assert abs(col[1] * p[1] + col[2] * p[2]) <= 1e-12
        assert np.linalg.norm(col) == pytest.approx(math.hypot(p[1], p[2]))


def test_pd_torque_arithmetic():
    np.testing.assert_array_equal(pd_swing_torque([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], [0, 0, 0]), [0, 0, 0])
    np.testing.assert_allclose(pd_swing_torque([0.1, 0, 0], [0, 0, 0], [0, 0, 0], kp=20, kd=0), [2.0, 0, 0])
    np.testing.assert_allclose(pd_swing_torque([0, 0, 0], [0, 0, 0], [2.0, 0, 0], kp=20, kd=0.5), [-1.0, 0, 0])
    np.testing.assert_array_equal(pd_swing_torque([100, -100, 0], [0, 0, 0], [0, 0, 0]), [33.5, -33.5, 0])
