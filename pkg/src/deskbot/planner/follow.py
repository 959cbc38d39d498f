"""Reactive pure-pursuit path follower for the pseudo-holonomic chassis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..voxelmap import HeightMap2p5D


@dataclass(frozen=True)
class FollowPathCommand:
    path: tuple  # ((x, y, yaw), ...)
    lookahead: float = 0.45  # m
    max_speed: float = 0.4  # m/s
    inflation_radius: float = 0.30  # m, chassis radius + clearance

    def __post_init__(self):
        if not self.path:
            raise ValueError("path must be nonempty")
        if self.lookahead <= 0:
            raise ValueError("lookahead must be > 0")
        object.__setattr__(self, "path",
                           tuple(tuple(float(v) for v in p) for p in self.path))


@dataclass(frozen=True)
class FollowResult:
    velocity: np.ndarray  # (vx, vy, wz) in the chassis frame
    blocked: bool
    done: bool


def _corridor_free(hm: HeightMap2p5D, start: np.ndarray, direction: np.ndarray,
                   length: float, radius: float) -> float:
    """Distance along direction until the swept disc hits a non-traversable
    cell; returns length when fully clear."""
    step = hm.resolution if hm.resolution > 0 else 0.05
    n = max(1, int(length / step))
    # disc sample offsets
    offs = []
    k = max(1, int(radius / step))
    for dx in range(-k, k + 1):
        for dy in range(-k, k + 1):
            o = np.array([dx * step, dy * step])
            if np.linalg.norm(o) <= radius:
                offs.append(o)
    offs = np.asarray(offs)
    for i in range(1, n + 1):
        p = start + direction * (i * length / n)
        for o in offs:
            if not hm.traversable_at(p + o):
                return (i - 1) * length / n
    return length


def follow_path(cmd: FollowPathCommand, local_map: HeightMap2p5D,
                chassis_state) -> FollowResult:
    """One follower tick.

    chassis_state: (x, y, yaw).  Returns a chassis-frame velocity, a blocked
    flag (all candidate arcs obstructed), and a done flag near the final pose.
    """
    x, y, yaw = float(chassis_state[0]), float(chassis_state[1]), float(chassis_state[2])
    pos = np.array([x, y])
    pts = np.asarray([(p[0], p[1]) for p in cmd.path])
    d = np.linalg.norm(pts - pos, axis=1)
    nearest = int(np.argmin(d))

    goal = cmd.path[-1]
    goal_dist = float(np.linalg.norm(np.asarray(goal[:2]) - pos))
    yaw_err_final = _wrap(goal[2] - yaw)
    if goal_dist < 0.04 and abs(yaw_err_final) < 0.05:
        return FollowResult(np.zeros(3), False, True)

    # lookahead point: first path point at least lookahead away, onward of
    # the nearest point
    target = pts[-1]
    for i in range(nearest, len(pts)):
        if np.linalg.norm(pts[i] - pos) >= cmd.lookahead:
            target = pts[i]
            break
    to_target = target - pos
    dist = float(np.linalg.norm(to_target))
    if dist < 1e-9:
        direction = np.array([math.cos(yaw), math.sin(yaw)])
    else:
        direction = to_target / dist

    # candidate headings fanned around the direct bearing
    base_ang = math.atan2(direction[1], direction[0])
    chosen = None
    clear_len = 0.0
    probe_len = min(max(goal_dist, 0.15), cmd.lookahead)
    for dev in (0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9, 1.2, -1.2, 1.5, -1.5):
        a = base_ang + dev
        u = np.array([math.cos(a), math.sin(a)])
        free = _corridor_free(local_map, pos, u, probe_len, cmd.inflation_radius)
        if free >= probe_len - 1e-9:
            chosen = u
            clear_len = free
            break
        if free > clear_len:
            chosen, clear_len = u, free
    if chosen is None or clear_len < local_map.resolution:
        return FollowResult(np.zeros(3), True, False)

    # slow near obstructions and near the goal
    speed = cmd.max_speed * min(1.0, clear_len / max(probe_len, 1e-9))
    speed = min(speed, cmd.max_speed, 0.3 + goal_dist)  # gentle final approach
    v_world = chosen * speed

    # face the travel direction en route; the taught yaw near the goal
    if goal_dist > 0.5:
        yaw_target = math.atan2(chosen[1], chosen[0])
    else:
        yaw_target = goal[2]
    wz = float(np.clip(2.0 * _wrap(yaw_target - yaw), -1.0, 1.0))

    c, s = math.cos(yaw), math.sin(yaw)
    v_base = np.array([c * v_world[0] + s * v_world[1],
                       -s * v_world[0] + c * v_world[1], wz])
    return FollowResult(v_base, False, False)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi
