"""Rigid-body geometry, robot kinematics, and collision primitives."""

from .model import (
    AttachedShape,
    FixedFrame,
    Joint,
    PointMass,
    RobotModel,
    UnknownFrameError,
    WORLD_FRAME,
    default_model,
    load_model,
    model_from_dict,
)
from .pose import Pose
from .shapes import (
    Capsule,
    CollisionShape,
    Sphere,
    shape_closest_points,
    shape_distance,
    shape_support_points,
)
from .state import JointState

__all__ = [
    "AttachedShape",
    "Capsule",
    "CollisionShape",
    "FixedFrame",
    "Joint",
    "JointState",
    "PointMass",
    "Pose",
    "RobotModel",
    "Sphere",
    "UnknownFrameError",
    "WORLD_FRAME",
    "default_model",
    "load_model",
    "model_from_dict",
    "shape_closest_points",
    "shape_distance",
    "shape_support_points",
]
