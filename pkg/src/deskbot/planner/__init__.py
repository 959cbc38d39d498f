"""Collision-free motion: Cartesian RRT, primitive fitting, path following."""

from ..collision import Attachment, CollisionWorld
from .fit import coverage_gaps, fit_collision_primitives
from .follow import FollowPathCommand, FollowResult, follow_path
from .scenes import CANNED_SCENES, cluttered_counter_scene, open_scene, wall_with_gap_scene
from .rrt import (
    CartesianRrt,
    PlanRequest,
    PlanResult,
    STATUS_FOUND,
    STATUS_TIMEOUT,
    STATUS_UNREACHABLE,
    validate_trajectory,
)

__all__ = [
    "Attachment",
    "CartesianRrt",
    "CollisionWorld",
    "FollowPathCommand",
    "FollowResult",
    "PlanRequest",
    "PlanResult",
    "STATUS_FOUND",
    "STATUS_TIMEOUT",
    "STATUS_UNREACHABLE",
    "CANNED_SCENES",
    "cluttered_counter_scene",
    "coverage_gaps",
    "fit_collision_primitives",
    "follow_path",
    "open_scene",
    "validate_trajectory",
    "wall_with_gap_scene",
]
