"""Simulated scene: analytic shapes, articulations, lights, scene file IO.

Scene shapes (sphere / capsule / box) exist for rendering and simulation;
collision geometry handed to planning remains sphere/capsule primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from ..geomkin import Capsule, Pose, Sphere


@dataclass(frozen=True)
class Box:
    center: tuple
    half_extents: tuple

    def __post_init__(self):
        he = tuple(float(v) for v in self.half_extents)
        if min(he) <= 0:
            raise ValueError("box half extents must be > 0")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extents", he)


SceneShape = Sphere | Capsule | Box


@dataclass(frozen=True)
class SceneObject:
    id: str
    shapes: tuple
    material: int
    pose: Pose
    semantic_class: int
    movable: bool = False
    group: str = ""

    def __post_init__(self):
        if not self.group:
            object.__setattr__(self, "group", self.id)
        object.__setattr__(self, "shapes", tuple(self.shapes))


@dataclass(frozen=True)
class Articulation:
    object_id: str
    axis_point: tuple  # world, a point on the hinge line
    axis_dir: tuple  # world, unit
    lo: float
    hi: float
    angle: float

    def __post_init__(self):
        d = np.asarray(self.axis_dir, dtype=float)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ValueError("articulation axis direction is zero")
        object.__setattr__(self, "axis_dir", tuple(d / n))
        object.__setattr__(self, "axis_point", tuple(float(v) for v in self.axis_point))
        if not (self.lo - 1e-9 <= self.angle <= self.hi + 1e-9):
            raise ValueError(f"articulation angle {self.angle} outside [{self.lo}, {self.hi}]")


def rotation_about_line(point, direction, angle: float) -> Pose:
    """Rigid transform rotating space about the line (point, direction)."""
    p = np.asarray(point, dtype=float)
    rot = Pose.from_axis_angle(np.asarray(direction, float), angle)
    return Pose(rot.q, p - rot.apply_vector(p))


@dataclass(frozen=True)
class SimScene:
    objects: tuple
    articulations: tuple = ()
    lights: float = 1.0
    regions: dict = field(default_factory=dict)  # name -> (lo3, hi3) world AABB
    name: str = "scene"

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object ids")
        for a in self.articulations:
            if a.object_id not in ids:
                raise ValueError(f"articulation references unknown object {a.object_id}")
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "articulations", tuple(self.articulations))

    def object(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def articulation(self, oid: str) -> Articulation | None:
        for a in self.articulations:
            if a.object_id == oid:
                return a
        return None

    def effective_pose(self, oid: str) -> Pose:
        """Object pose including its articulation rotation, if any."""
        o = self.object(oid)
        a = self.articulation(oid)
        if a is None:
            return o.pose
        return rotation_about_line(a.axis_point, a.axis_dir, a.angle).compose(o.pose)

    def with_articulation_angle(self, oid: str, angle: float) -> "SimScene":
        arts = tuple(
            replace(a, angle=float(np.clip(angle, a.lo, a.hi))) if a.object_id == oid else a
            for a in self.articulations
        )
        return replace(self, articulations=arts)

    def with_object_pose(self, oid: str, pose: Pose) -> "SimScene":
        objs = tuple(replace(o, pose=pose) if o.id == oid else o for o in self.objects)
        return replace(self, objects=objs)

    def with_lights(self, lights: float) -> "SimScene":
        return replace(self, lights=float(lights))

    def without_object(self, oid: str) -> "SimScene":
        return replace(self, objects=tuple(o for o in self.objects if o.id != oid))

    def transformed_group(self, group: str, T: Pose) -> "SimScene":
        """Rigidly move every object of a group (and its hinge lines)."""
        objs = tuple(
            replace(o, pose=T.compose(o.pose)) if o.group == group else o for o in self.objects
        )
        by_id = {o.id: o for o in self.objects}
        arts = []
        for a in self.articulations:
            if by_id[a.object_id].group == group:
                arts.append(
                    replace(
                        a,
                        axis_point=tuple(T.apply(np.asarray(a.axis_point))),
                        axis_dir=tuple(T.apply_vector(np.asarray(a.axis_dir))),
                    )
                )
            else:
                arts.append(a)
        return replace(self, objects=objs, articulations=tuple(arts))

    def groups(self) -> list[str]:
        seen = []
        for o in self.objects:
            if o.group not in seen:
                seen.append(o.group)
        return seen


# -- scene file IO -----------------------------------------------------------


def _shape_from_spec(spec: dict) -> SceneShape:
    kind = spec["kind"]
    if kind == "sphere":
        return Sphere(tuple(spec["center"]), float(spec["radius"]))
    if kind == "capsule":
        return Capsule(tuple(spec["a"]), tuple(spec["b"]), float(spec["radius"]))
    if kind == "box":
        return Box(tuple(spec["center"]), tuple(spec["half_extents"]))
    raise ValueError(f"unknown scene shape kind {kind}")


def _shape_to_spec(s: SceneShape) -> dict:
    if isinstance(s, Sphere):
        return {"kind": "sphere", "center": list(s.center), "radius": s.radius}
    if isinstance(s, Capsule):
        return {"kind": "capsule", "a": list(s.a), "b": list(s.b), "radius": s.radius}
    return {"kind": "box", "center": list(s.center), "half_extents": list(s.half_extents)}


def _pose_from_spec(spec) -> Pose:
    if not spec:
        return Pose.identity()
    if "quat" in spec:
        return Pose(spec["quat"], spec.get("xyz", [0, 0, 0]))
    xyz = spec.get("xyz", [0, 0, 0])
    rpy = spec.get("rpy", [0, 0, 0])
    return Pose.from_xyzrpy(xyz[0], xyz[1], xyz[2], rpy[0], rpy[1], rpy[2])


def scene_from_dict(doc: dict) -> SimScene:
    classes = doc.get("classes", {})
    materials = doc.get("materials", {})

    def class_id(v):
        return classes[v] if isinstance(v, str) else int(v)

    def material_id(v):
        return materials[v] if isinstance(v, str) else int(v)

    objects = []
    for os_ in doc.get("objects", []):
        objects.append(
            SceneObject(
                id=os_["id"],
                shapes=tuple(_shape_from_spec(s) for s in os_.get("shapes", [])),
                material=material_id(os_.get("material", 0)),
                pose=_pose_from_spec(os_.get("pose")),
                semantic_class=class_id(os_.get("class", 0)),
                movable=bool(os_.get("movable", False)),
                group=os_.get("group", ""),
            )
        )
    arts = [
        Articulation(
            object_id=a["object"],
            axis_point=tuple(a["axis_point"]),
            axis_dir=tuple(a["axis_dir"]),
            lo=float(a["range"][0]),
            hi=float(a["range"][1]),
            angle=float(a.get("angle", a["range"][0])),
        )
        for a in doc.get("articulations", [])
    ]
    regions = {
        k: (tuple(v[0]), tuple(v[1])) for k, v in doc.get("regions", {}).items()
    }
    return SimScene(
        objects=tuple(objects),
        articulations=tuple(arts),
        lights=float(doc.get("lights", 1.0)),
        regions=regions,
        name=doc.get("name", "scene"),
    )


def load_scene(path) -> SimScene:
    with open(path) as f:
        return scene_from_dict(yaml.safe_load(f))


def packaged_scene(name: str) -> SimScene:
    from importlib import resources

    text = resources.files("deskbot.data").joinpath(f"{name}.yaml").read_text()
    return scene_from_dict(yaml.safe_load(text))
