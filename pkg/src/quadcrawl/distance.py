"""Signed distance from a point to a set of axis-aligned boxes.

``signed_distance`` is the exact Euclidean value (negative inside, equal to
minus the distance to the nearest face). ``smooth_signed_distance`` is a C1
surrogate for use inside gradient-based solvers: every kink of the exact
formula (|.|, max(., 0), max over axes, min over boxes) is replaced by a
quadratic blend of half-width ``smoothing / 2``. Where all blends are
inactive, which covers every point farther than the blend width from a box's
face planes, the surrogate equals the exact value bit for bit.
"""

from __future__ import annotations

import numpy as np

from .core import World

NO_OBSTACLE_DISTANCE = 1e6


def _box_arrays(world: World):
    if not world.obstacles:
        return None, None
    centers = np.array([b.center for b in world.obstacles])
    halves = np.array([b.half_extent for b in world.obstacles])
    return centers, halves


def signed_distance(point, world: World) -> float:
    """Exact signed distance of a single 3-D point; +1e6 with no obstacles."""
    p = np.asarray(point, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return float(signed_distance_many(p[None, :], world)[0])


def signed_distance_many(points, world: World) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centers, halves = _box_arrays(world)
    if centers is None:
        return np.full(pts.shape[0], NO_OBSTACLE_DISTANCE)
    q = np.abs(pts[:, None, :] - centers[None]) - halves[None]  # (P, B, 3)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=2)
    inside = np.minimum(q.max(axis=2), 0.0)
    return (outside + inside).min(axis=1)


def _sabs(x, w):
    """C1 absolute value; returns (value, derivative)."""
    ax = np.abs(x)
    inner = ax < w
    val = np.where(inner, x * x / (2 * w) + w / 2, ax)
    der = np.where(inner, x / w, np.sign(x))
    return val, der


def _smax(a, b, w):
    """C1 max(a, b); returns (value, d/da, d/db)."""
    s, ds = _sabs(a - b, w)
    return 0.5 * (a + b + s), 0.5 * (1 + ds), 0.5 * (1 - ds)


def _smin(a, b, w):
    s, ds = _sabs(a - b, w)
    return 0.5 * (a + b - s), 0.5 * (1 - ds), 0.5 * (1 + ds)


def smooth_signed_distance_many(points, world: World, smoothing: float = 0.01):
    """Vectorized smooth signed distance and its gradient.

    Returns ``(values, gradients)`` with shapes (P,) and (P, 3).
    """
    if not smoothing > 0:
        raise ValueError(f"smoothing must be positive, got {smoothing}")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centers, halves = _box_arrays(world)
    n = pts.shape[0]
    if centers is None:
        return np.full(n, NO_OBSTACLE_DISTANCE), np.zeros((n, 3))
    w = 0.5 * smoothing

    d = pts[:, None, :] - centers[None]  # (P, B, 3)
    a, da = _sabs(d, w)
    q = a - halves[None]
    r, dr_dq = _sabs(q, w)
    r = 0.5 * (q + r)  # smooth max(q, 0)
    dr_dq = 0.5 * (1 + dr_dq)
    norm_sq = np.sum(r * r, axis=2)
    outside = np.sqrt(norm_sq)
    safe = np.where(outside > 0, outside, 1.0)
    d_out_dq = np.where(outside[..., None] > 0, r * dr_dq / safe[..., None], 0.0)

    m01, g0, g1 = _smax(q[..., 0], q[..., 1], w)
    mq, g01, g2 = _smax(m01, q[..., 2], w)
    dmq_dq = np.stack([g01 * g0, g01 * g1, g2], axis=-1)
    inside, dins_dm, _ = _smin(mq, np.zeros_like(mq), w)
    d_in_dq = dins_dm[..., None] * dmq_dq

    per_box = outside + inside  # (P, B)
    grad_box = (d_out_dq + d_in_dq) * da  # (P, B, 3)

    value = per_box[:, 0]
    grad = grad_box[:, 0, :]
    for k in range(1, per_box.shape[1]):
        value, ga, gb = _smin(value, per_box[:, k], w)
        grad = ga[:, None] * grad + gb[:, None] * grad_box[:, k, :]
    return value, grad


def smooth_signed_distance(point, world: World, smoothing: float = 0.01) -> float:
    p = np.asarray(point, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return float(smooth_signed_distance_many(p[None, :], world, smoothing)[0][0])


def smooth_signed_distance_gradient(point, world: World, smoothing: float = 0.01) -> np.ndarray:
    p = np.asarray(point, dtype=float).reshape(3)
    return smooth_signed_distance_many(p[None, :], world, smoothing)[1][0]
