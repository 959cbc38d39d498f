"""Canned planning scenes used by the regression and acceptance suites:
open space, wall-with-gap, and a cluttered counter."""

from __future__ import annotations

import numpy as np

from ..collision import CollisionWorld
from ..geomkin import Capsule, JointState, Pose, RobotModel, Sphere


def open_scene(model: RobotModel):
    state = JointState(model.preferred_posture)
    tool = model.fk(state.position, "tool")
    goal = Pose(tool.q, tool.t + np.array([0.24, -0.08, -0.06]))
    return CollisionWorld.empty(), state, goal


def wall_with_gap_scene(model: RobotModel):
    """Horizontal slot centered on the tool; the goal lies beyond the wall."""
    state = JointState(model.preferred_posture)
    tool = model.fk(state.position, "tool")
    wx = tool.t[0] + 0.10
    gap_half = 0.25
    shapes = []
    for k in range(5):
        for sgn in (1, -1):
            z = tool.t[2] + sgn * (gap_half + 0.055 + 0.11 * k)
            shapes.append(
                Capsule((wx, tool.t[1] - 0.9, z), (wx, tool.t[1] + 0.9, z), 0.055)
            )
    goal = Pose(tool.q, tool.t + np.array([0.16, 0.0, -0.03]))
    return CollisionWorld(shapes=tuple(shapes)), state, goal


def cluttered_counter_scene(model: RobotModel):
    """Loose spheres flanking the reach channel."""
    state = JointState(model.preferred_posture)
    tool = model.fk(state.position, "tool")
    offsets = [
        (0.12, 0.17, 0.06),
        (0.10, -0.18, -0.05),
        (0.16, 0.14, 0.18),
        (0.14, -0.02, -0.20),
    ]
    shapes = tuple(Sphere(tuple(tool.t + np.asarray(o)), 0.04) for o in offsets)
    goal = Pose(tool.q, tool.t + np.array([0.24, 0.0, -0.02]))
    return CollisionWorld(shapes=shapes), state, goal


CANNED_SCENES = {
    "open": open_scene,
    "wall-with-gap": wall_with_gap_scene,
    "cluttered-counter": cluttered_counter_scene,
}
