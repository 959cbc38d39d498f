"""World collision state shared by the controller and the planner."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geomkin import CollisionShape, Pose


@dataclass(frozen=True)
class Attachment:
    object_id: str
    frame: str  # gripper-side frame the object rides on
    shapes: tuple  # CollisionShape in that frame's coordinates
    mass: float = 0.0


@dataclass(frozen=True)
class CollisionWorld:
    """Static obstacle primitives (world frame) plus held-object attachments.

    Attached objects are excluded from hand-object pairs: they are checked
    against the static shapes only.
    """

    shapes: tuple = ()
    shape_poses: tuple = ()  # Pose per shape; identity when omitted
    attachments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        poses = tuple(self.shape_poses) or tuple(Pose.identity() for _ in self.shapes)
        if len(poses) != len(self.shapes):
            raise ValueError("one pose per shape required")
        object.__setattr__(self, "shape_poses", poses)
        object.__setattr__(self, "attachments", tuple(self.attachments))

    @staticmethod
    def empty() -> "CollisionWorld":
        return CollisionWorld()

    def with_shapes(self, shapes, poses=None) -> "CollisionWorld":
        poses = tuple(poses) if poses else tuple(Pose.identity() for _ in shapes)
        return replace(
            self,
            shapes=self.shapes + tuple(shapes),
            shape_poses=self.shape_poses + poses,
        )

    def with_attachment(self, att: Attachment) -> "CollisionWorld":
        return replace(self, attachments=self.attachments + (att,))

    def without_attachment(self, object_id: str) -> "CollisionWorld":
        return replace(
            self,
            attachments=tuple(a for a in self.attachments if a.object_id != object_id),
        )

    def attached(self, object_id: str) -> Attachment | None:
        for a in self.attachments:
            if a.object_id == object_id:
                return a
        return None
