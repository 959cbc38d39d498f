"""Robot kinematic model: joint tree, forward kinematics, Jacobians.

The default desk model has an 18-DOF layout: a 3-DOF planar pseudo-holonomic
base (x, y, yaw), 5 torso joints (yaw-pitch-pitch-pitch-yaw), a 7-DOF arm,
a 2-DOF pan/tilt head, and a 1-DOF gripper.  Link dimensions are plausible
placeholders, not measured values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .pose import Pose, quat_to_matrix
from .shapes import Capsule, CollisionShape, Sphere

WORLD_FRAME = "world"


@dataclass(frozen=True)
class Joint:
    name: str
    type: str  # "revolute" | "prismatic" | "planar"
    parent_frame: str
    child_frame: str
    origin: Pose
    axis: np.ndarray  # joint frame; unused for planar
    pos_lower: np.ndarray  # per dof
    pos_upper: np.ndarray
    vel_limit: np.ndarray
    acc_limit: np.ndarray

    @property
    def ndof(self) -> int:
        return 3 if self.type == "planar" else 1


@dataclass(frozen=True)
class FixedFrame:
    name: str
    parent_frame: str
    origin: Pose


@dataclass(frozen=True)
class AttachedShape:
    frame: str
    shape: CollisionShape
    name: str = ""


@dataclass(frozen=True)
class PointMass:
    frame: str
    mass: float  # kg
    com: np.ndarray  # offset in frame


class UnknownFrameError(KeyError):
    pass


@dataclass
class RobotModel:
    name: str
    joints: list[Joint]
    fixed_frames: list[FixedFrame] = field(default_factory=list)
    parts: dict[str, list[str]] = field(default_factory=dict)
    shapes: list[AttachedShape] = field(default_factory=list)
    self_collision_pairs: list[tuple[int, int]] = field(default_factory=list)
    masses: list[PointMass] = field(default_factory=list)
    preferred_posture: np.ndarray | None = None
    footprint: np.ndarray | None = None  # (k, 2) chassis-frame polygon, CCW

    def __post_init__(self):
        self._dof_start: dict[str, int] = {}
        self._frame_parent: dict[str, tuple] = {WORLD_FRAME: None}
        n = 0
        for j in self.joints:
            if j.parent_frame not in self._frame_parent:
                raise ValueError(f"joint {j.name}: parent frame {j.parent_frame} undeclared")
            if j.child_frame in self._frame_parent:
                raise ValueError(f"duplicate frame {j.child_frame}")
            self._frame_parent[j.child_frame] = ("joint", j)
            self._dof_start[j.name] = n
            n += j.ndof
        for f in self.fixed_frames:
            if f.parent_frame not in self._frame_parent:
                raise ValueError(f"fixed frame {f.name}: parent {f.parent_frame} undeclared")
            if f.name in self._frame_parent:
                raise ValueError(f"duplicate frame {f.name}")
            self._frame_parent[f.name] = ("fixed", f)
        self.nq = n
        if self.preferred_posture is None:
            self.preferred_posture = np.zeros(n)
        lo, hi, vel, acc = [], [], [], []
        for j in self.joints:
            lo.append(j.pos_lower)
            hi.append(j.pos_upper)
            vel.append(j.vel_limit)
            acc.append(j.acc_limit)
        self.pos_lower = np.concatenate(lo) if lo else np.zeros(0)
        self.pos_upper = np.concatenate(hi) if hi else np.zeros(0)
        self.vel_limit = np.concatenate(vel) if vel else np.zeros(0)
        self.acc_limit = np.concatenate(acc) if acc else np.zeros(0)
        if np.any(self.pos_lower > self.pos_upper):
            raise ValueError("empty joint limit interval")
        for part, names in self.parts.items():
            for jn in names:
                if jn not in self._dof_start:
                    raise ValueError(f"part {part}: unknown joint {jn}")

    # -- structure queries ------------------------------------------------

    def frame_names(self) -> list[str]:
        return list(self._frame_parent.keys())

    def has_frame(self, frame: str) -> bool:
        return frame in self._frame_parent

    def joint_index(self, name: str) -> int:
        return self._dof_start[name]

    def part_dof_indices(self, part: str) -> np.ndarray:
        idx = []
        for jn in self.parts[part]:
            j = next(jj for jj in self.joints if jj.name == jn)
            s = self._dof_start[jn]
            idx.extend(range(s, s + j.ndof))
        return np.array(idx, dtype=int)

    def clamp_position(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.pos_lower, self.pos_upper)

    # -- kinematics --------------------------------------------------------

    def _fk_pass(self, q: np.ndarray):
        """One pass over the tree.

        Returns (frames, dof_axes) where frames maps frame -> (R, p) and
        dof_axes is a list over dofs of (kind, world axis, world point).
        kind is "rev" or "prism".  The last pass is memoized: control and
        planning code evaluates many kinematic queries at one q per tick.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self.nq,):
            raise ValueError(f"expected q of length {self.nq}, got {q.shape}")
        memo = getattr(self, "_fk_memo", None)
        if memo is not None and np.array_equal(memo[0], q):
            return memo[1], memo[2]
        frames = {WORLD_FRAME: (np.eye(3), np.zeros(3))}
        dof_axes: list = [None] * self.nq
        for j in self.joints:
            Rp, pp = frames[j.parent_frame]
            Ro = Rp @ j.origin.rotation_matrix()
            po = pp + Rp @ j.origin.t
            s = self._dof_start[j.name]
            if j.type == "planar":
                x, y, yaw = q[s : s + 3]
                c, sn = np.cos(yaw), np.sin(yaw)
                Rz = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0.0, 0.0, 1.0]])
                p_rot = po + Ro @ np.array([x, y, 0.0])
                R = Ro @ Rz
                dof_axes[s] = ("prism", Ro[:, 0].copy(), po)
                dof_axes[s + 1] = ("prism", Ro[:, 1].copy(), po)
                dof_axes[s + 2] = ("rev", Ro[:, 2].copy(), p_rot)
                frames[j.child_frame] = (R, p_rot)
            elif j.type == "revolute":
                axis_w = Ro @ j.axis
                R = Ro @ _rodrigues(j.axis, q[s])
                dof_axes[s] = ("rev", axis_w, po)
                frames[j.child_frame] = (R, po)
            elif j.type == "prismatic":
                axis_w = Ro @ j.axis
                dof_axes[s] = ("prism", axis_w, po)
                frames[j.child_frame] = (Ro, po + axis_w * q[s])
            else:
                raise ValueError(f"unknown joint type {j.type}")
        for f in self.fixed_frames:
            Rp, pp = frames[f.parent_frame]
            frames[f.name] = (Rp @ f.origin.rotation_matrix(), pp + Rp @ f.origin.t)
        self._fk_memo = (q.copy(), frames, dof_axes)
        return frames, dof_axes

    def _dofs_affecting(self, frame: str) -> np.ndarray:
        """Dof indices on the chain from world to `frame` (memoized)."""
        if frame not in self._frame_parent:
            raise UnknownFrameError(frame)
        cache = getattr(self, "_dofs_memo", None)
        if cache is None:
            cache = {}
            self._dofs_memo = cache
        hit = cache.get(frame)
        if hit is not None:
            return hit
        idx = []
        node = frame
        while node != WORLD_FRAME:
            kind, obj = self._frame_parent[node]
            if kind == "joint":
                s = self._dof_start[obj.name]
                idx.extend(range(s, s + obj.ndof))
                node = obj.parent_frame
            else:
                node = obj.parent_frame
        out = np.array(sorted(idx), dtype=int)
        cache[frame] = out
        return out

    def fk(self, q: np.ndarray, frame: str) -> Pose:
        if frame not in self._frame_parent:
            raise UnknownFrameError(frame)
        frames, _ = self._fk_pass(q)
        R, p = frames[frame]
        return Pose.from_matrix(_homogeneous(R, p))

    def fk_all(self, q: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """All frame poses as (R, p) tuples; cheaper than Pose objects."""
        frames, _ = self._fk_pass(q)
        return frames

    def jacobian(self, q: np.ndarray, frame: str) -> np.ndarray:
        """Geometric Jacobian, rows 0-2 linear (m), rows 3-5 angular (rad)."""
        if frame not in self._frame_parent:
            raise UnknownFrameError(frame)
        frames, dof_axes = self._fk_pass(q)
        _, p = frames[frame]
        J = np.zeros((6, self.nq))
        for i in self._dofs_affecting(frame):
            kind, axis, point = dof_axes[i]
            if kind == "rev":
                J[:3, i] = _cross3(axis, p - point)
                J[3:, i] = axis
            else:
                J[:3, i] = axis
        return J

    def com(self, q: np.ndarray) -> np.ndarray:
        frames, _ = self._fk_pass(q)
        total = 0.0
        acc = np.zeros(3)
        for pm in self.masses:
            R, p = frames[pm.frame]
            acc += pm.mass * (p + R @ pm.com)
            total += pm.mass
        return acc / total if total > 0 else acc

    def com_jacobian(self, q: np.ndarray) -> np.ndarray:
        """3 x nq Jacobian of the mass-weighted CoM position."""
        frames, dof_axes = self._fk_pass(q)
        J = np.zeros((3, self.nq))
        total = sum(pm.mass for pm in self.masses)
        if total <= 0:
            return J
        for pm in self.masses:
            R, p = frames[pm.frame]
            pw = p + R @ pm.com
            for i in self._dofs_affecting(pm.frame):
                kind, axis, point = dof_axes[i]
                if kind == "rev":
                    J[:, i] += pm.mass * _cross3(axis, pw - point)
                else:
                    J[:, i] += pm.mass * axis
        return J / total

    def shape_poses(self, q: np.ndarray) -> list[Pose]:
        frames, _ = self._fk_pass(q)
        out = []
        for at in self.shapes:
            R, p = frames[at.frame]
            out.append(Pose.from_matrix(_homogeneous(R, p)))
        return out


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries ~6us of axis-normalization overhead per call; this
    # path runs hundreds of times per control tick
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def _homogeneous(R: np.ndarray, p: np.ndarray) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


# -- model file IO ----------------------------------------------------------


def _pose_from_spec(spec: dict | None) -> Pose:
    if not spec:
        return Pose.identity()
    if "quat" in spec:
        return Pose(spec["quat"], spec.get("xyz", [0, 0, 0]))
    xyz = spec.get("xyz", [0, 0, 0])
    rpy = spec.get("rpy", [0, 0, 0])
    return Pose.from_xyzrpy(xyz[0], xyz[1], xyz[2], rpy[0], rpy[1], rpy[2])


def _shape_from_spec(spec: dict) -> CollisionShape:
    kind = spec["kind"]
    if kind == "sphere":
        return Sphere(tuple(spec["center"]), float(spec["radius"]))
    if kind == "capsule":
        return Capsule(tuple(spec["a"]), tuple(spec["b"]), float(spec["radius"]))
    raise ValueError(f"unknown shape kind {kind}")


def model_from_dict(doc: dict) -> RobotModel:
    joints = []
    for js in doc["joints"]:
        ndof = 3 if js["type"] == "planar" else 1
        if ndof == 3:
            lo = np.asarray(js["pos_lower"], dtype=float)
            hi = np.asarray(js["pos_upper"], dtype=float)
            vel = np.asarray(js["vel"], dtype=float)
            acc = np.asarray(js["acc"], dtype=float)
        else:
            lo = np.array([float(js["pos"][0])])
            hi = np.array([float(js["pos"][1])])
            vel = np.array([float(js["vel"])])
            acc = np.array([float(js["acc"])])
        joints.append(
            Joint(
                name=js["name"],
                type=js["type"],
                parent_frame=js["parent"],
                child_frame=js["child"],
                origin=_pose_from_spec(js.get("origin")),
                axis=np.asarray(js.get("axis", [0, 0, 1]), dtype=float),
                pos_lower=lo,
                pos_upper=hi,
                vel_limit=vel,
                acc_limit=acc,
            )
        )
    fixed = [
        FixedFrame(fs["name"], fs["parent"], _pose_from_spec(fs.get("origin")))
        for fs in doc.get("frames", [])
    ]
    shapes = [
        AttachedShape(ss["frame"], _shape_from_spec(ss), ss.get("name", f"shape{i}"))
        for i, ss in enumerate(doc.get("shapes", []))
    ]
    masses = [
        PointMass(ms["frame"], float(ms["mass"]), np.asarray(ms.get("com", [0, 0, 0]), float))
        for ms in doc.get("masses", [])
    ]
    return RobotModel(
        name=doc.get("name", "robot"),
        joints=joints,
        fixed_frames=fixed,
        parts={k: list(v) for k, v in doc.get("parts", {}).items()},
        shapes=shapes,
        self_collision_pairs=[tuple(p) for p in doc.get("self_collision_pairs", [])],
        masses=masses,
        preferred_posture=np.asarray(doc["preferred_posture"], dtype=float)
        if "preferred_posture" in doc
        else None,
        footprint=np.asarray(doc["footprint"], dtype=float) if "footprint" in doc else None,
    )


def load_model(path) -> RobotModel:
    with open(path) as f:
        return model_from_dict(yaml.safe_load(f))


def default_model() -> RobotModel:
    """The committed 18-DOF desk model fixture."""
    from importlib import resources

    text = resources.files("deskbot.data").joinpath("robot_18dof.yaml").read_text()
    return model_from_dict(yaml.safe_load(text))
