"""Keyframe capture, matching, and 6-DOF delta-pose registration."""

from .config import MatcherConfig
from .core import (
    STATUS_DEGENERATE,
    STATUS_INSUFFICIENT,
    STATUS_OK,
    CorrespondenceSet,
    DeltaPose,
    InsufficientDepthError,
    Keyframe,
    capture,
    filter_inliers_euclidean,
    match,
    select_best,
    solve_pose,
)
from .serial import read_keyframe, write_keyframe

__all__ = [
    "CorrespondenceSet",
    "DeltaPose",
    "InsufficientDepthError",
    "Keyframe",
    "MatcherConfig",
    "STATUS_DEGENERATE",
    "STATUS_INSUFFICIENT",
    "STATUS_OK",
    "capture",
    "filter_inliers_euclidean",
    "match",
    "read_keyframe",
    "select_best",
    "solve_pose",
    "write_keyframe",
]
