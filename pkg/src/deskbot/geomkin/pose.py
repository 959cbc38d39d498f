"""Rigid transforms in 3-D: unit-quaternion rotation + translation.

Quaternions are stored (w, x, y, z) with the scalar part canonicalized to
w >= 0 so that serialized poses are unique.  Translations are meters.
"""

from __future__ import annotations

import math

import numpy as np

_QUAT_NORM_TOL = 1e-9


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion q.  v is (3,) or (n, 3)."""
    w, x, y, z = q
    R = quat_to_matrix(q)
    if v.ndim == 1:
        return R @ v
    return v @ R.T


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns canonicalized (w, x, y, z)."""
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 >= m11 and m00 >= m22:
        s = math.sqrt(1.0 + m00 - m11 - m22) * 2
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 >= m22:
        s = math.sqrt(1.0 + m11 - m00 - m22) * 2
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = math.sqrt(1.0 + m22 - m00 - m11) * 2
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    q = np.concatenate([[math.cos(half)], math.sin(half) * axis / n])
    if q[0] < 0:
        q = -q
    return q


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector (radians); angle in [0, pi] for canonical q."""
    w = min(1.0, max(-1.0, q[0]))
    angle = 2.0 * math.acos(w)
    s2 = 1.0 - w * w
    if s2 < 1e-18:
        # small angle: sin(a/2) ~ a/2, vector part ~ axis*a/2
        return 2.0 * q[1:4]
    return q[1:4] * (angle / math.sqrt(s2))


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        q = np.concatenate([[1.0], 0.5 * v])
        return q / np.linalg.norm(q)
    return quat_from_axis_angle(v, angle)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=float)


class Pose:
    """Rigid transform: p_world = R * p_local + t.

    Immutable value type; arrays are copied in and marked read-only.
    """

    __slots__ = ("q", "t", "_R")

    def __init__(self, q=None, t=None):
        qa = np.array([1.0, 0.0, 0.0, 0.0]) if q is None else np.asarray(q, dtype=float).copy()
        ta = np.zeros(3) if t is None else np.asarray(t, dtype=float).copy()
        n = np.linalg.norm(qa)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} too far from 1")
        qa /= n
        if qa[0] < 0:
            qa = -qa
        qa.flags.writeable = False
        ta.flags.writeable = False
        object.__setattr__(self, "q", qa)
        object.__setattr__(self, "t", ta)
        object.__setattr__(self, "_R", None)

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        p = Pose(quat_from_matrix(T[:3, :3]), T[:3, 3])
        R = np.array(T[:3, :3], dtype=float)
        R.flags.writeable = False
        object.__setattr__(p, "_R", R)
        return p

    @staticmethod
    def from_axis_angle(axis, angle: float, t=None) -> "Pose":
        return Pose(quat_from_axis_angle(np.asarray(axis, float), angle), t)

    @staticmethod
    def from_xyzrpy(x=0.0, y=0.0, z=0.0, roll=0.0, pitch=0.0, yaw=0.0) -> "Pose":
        qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
        qy = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), pitch)
        qx = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), roll)
        return Pose(quat_mul(qz, quat_mul(qy, qx)), np.array([x, y, z], dtype=float))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.t
        return T

    def rotation_matrix(self) -> np.ndarray:
        R = self._R
        if R is None:
            R = quat_to_matrix(self.q)
            R.flags.writeable = False
            object.__setattr__(self, "_R", R)
        return R

    def compose(self, other: "Pose") -> "Pose":
        return Pose(quat_mul(self.q, other.q), self.t + quat_rotate(self.q, other.t))

    def __mul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.q)
        return Pose(qi, -quat_rotate(qi, self.t))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform point(s), (3,) or (n, 3)."""
        R = self.rotation_matrix()
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return R @ pts + self.t
        return pts @ R.T + self.t

    def apply_vector(self, v: np.ndarray) -> np.ndarray:
        """Rotate direction(s) without translating."""
        R = self.rotation_matrix()
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return R @ v
        return v @ R.T

    def rotvec(self) -> np.ndarray:
        return rotvec_from_quat(self.q)

    def log(self) -> np.ndarray:
        """SE(3) log: 6-vector (rho, phi) with exp(log(p)) == p."""
        phi = rotvec_from_quat(self.q)
        angle = np.linalg.norm(phi)
        if angle < 1e-9:
            Vinv = np.eye(3) - 0.5 * _skew(phi)
        else:
            K = _skew(phi / angle)
            half = 0.5 * angle
            cot = half / math.tan(half)
            Vinv = np.eye(3) - 0.5 * _skew(phi) + (1.0 - cot) * (K @ K)
        return np.concatenate([Vinv @ self.t, phi])

    @staticmethod
    def exp(xi: np.ndarray) -> "Pose":
        """SE(3) exp of a 6-vector (rho, phi)."""
        xi = np.asarray(xi, dtype=float)
        rho, phi = xi[:3], xi[3:]
        angle = np.linalg.norm(phi)
        if angle < 1e-9:
            V = np.eye(3) + 0.5 * _skew(phi)
        else:
            K = _skew(phi / angle)
            V = (
                np.eye(3)
                + ((1 - math.cos(angle)) / angle) * K
                + ((angle - math.sin(angle)) / angle) * (K @ K)
            )
        return Pose(quat_from_rotvec(phi), V @ rho)

    def angular_distance(self, other: "Pose") -> float:
        """Rotation angle (radians) between the two orientations."""
        d = quat_mul(quat_conj(self.q), other.q)
        return float(np.linalg.norm(rotvec_from_quat(d if d[0] >= 0 else -d)))

    def translation_distance(self, other: "Pose") -> float:
        return float(np.linalg.norm(self.t - other.t))

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(self.t) <= tol and abs(self.q[0] - 1.0) <= tol)

    def almost_equal(self, other: "Pose", lin_tol: float = 1e-9, ang_tol: float = 1e-9) -> bool:
        return (
            self.translation_distance(other) <= lin_tol
            and self.angular_distance(other) <= ang_tol
        )

    def to_list(self) -> list:
        """[qw, qx, qy, qz, tx, ty, tz] for serialization."""
        return [float(v) for v in np.concatenate([self.q, self.t])]

    @staticmethod
    def from_list(vals) -> "Pose":
        vals = list(vals)
        return Pose(vals[:4], vals[4:7])

    def __repr__(self) -> str:
        q = ", ".join(f"{v:.4f}" for v in self.q)
        t = ", ".join(f"{v:.4f}" for v in self.t)
        return f"Pose(q=[{q}], t=[{t}])"
