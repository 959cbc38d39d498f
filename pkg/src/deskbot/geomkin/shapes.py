"""Collision primitives (spheres, capsules) and exact signed distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose import Pose


@dataclass(frozen=True)
class Sphere:
    center: tuple  # local frame, meters
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be > 0")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))


@dataclass(frozen=True)
class Capsule:
    a: tuple  # segment endpoints, local frame
    b: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be > 0")
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if a == b:
            raise ValueError("capsule endpoints must differ")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


CollisionShape = Sphere | Capsule


def _segment_segment_closest(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2] (Ericson 5.1.9)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-14
    if a <= eps and e <= eps:
        return p1, p2
    if a <= eps:
        s = 0.0
        t = min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    return p1 + s * d1, p2 + t * d2


def _point_segment_closest(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-14:
        return a
    u = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return a + u * ab


def _as_world(shape: CollisionShape, pose: Pose):
    """Return (segment endpoints a, b, radius); spheres degenerate to a == b."""
    if isinstance(shape, Sphere):
        c = pose.apply(np.asarray(shape.center))
        return c, c, shape.radius
    a = pose.apply(np.asarray(shape.a))
    b = pose.apply(np.asarray(shape.b))
    return a, b, shape.radius


def shape_distance(a: CollisionShape, pose_a: Pose, b: CollisionShape, pose_b: Pose) -> float:
    """Signed distance: positive = separated, negative = penetrating.

    Exactly symmetric in its arguments: operands are ordered by a canonical
    key before the closest-point computation.
    """
    pa, qa, ra = _as_world(a, pose_a)
    pb, qb, rb = _as_world(b, pose_b)
    if (rb, *pb, *qb) < (ra, *pa, *qa):
        (pa, qa, ra), (pb, qb, rb) = (pb, qb, rb), (pa, qa, ra)
    same_a = np.array_equal(pa, qa)
    same_b = np.array_equal(pb, qb)
    if same_a and same_b:
        d = np.linalg.norm(pa - pb)
    elif same_a:
        d = np.linalg.norm(pa - _point_segment_closest(pa, pb, qb))
    elif same_b:
        d = np.linalg.norm(pb - _point_segment_closest(pb, pa, qa))
    else:
        c1, c2 = _segment_segment_closest(pa, qa, pb, qb)
        d = np.linalg.norm(c1 - c2)
    return float(d - ra - rb)


def shape_closest_points(a: CollisionShape, pose_a: Pose, b: CollisionShape, pose_b: Pose):
    """(point on a's surface side, point on b's side, normal a->b, signed distance).

    The normal is the unit vector from a's core towards b's core; for
    coincident cores an arbitrary +z normal is returned.
    """
    pa, qa, ra = _as_world(a, pose_a)
    pb, qb, rb = _as_world(b, pose_b)
    c1, c2 = _segment_segment_closest(pa, qa, pb, qb)
    delta = c2 - c1
    d = float(np.linalg.norm(delta))
    n = delta / d if d > 1e-12 else np.array([0.0, 0.0, 1.0])
    return c1 + n * ra, c2 - n * rb, n, d - ra - rb


def shape_support_points(shape: CollisionShape, pose: Pose, spacing: float = 0.01) -> np.ndarray:
    """Points sampled along the core segment (world frame), for CoM/voxel use."""
    pa, qa, _ = _as_world(shape, pose)
    length = float(np.linalg.norm(qa - pa))
    n = max(2, int(length / spacing) + 1) if length > 1e-9 else 1
    ts = np.linspace(0.0, 1.0, n)
    return pa[None, :] + ts[:, None] * (qa - pa)[None, :]
