"""Planner tests: primitive fitting coverage, RRT + validator cross-checks,
pure-pursuit follower behavior."""

import numpy as np
import pytest

from deskbot.collision import CollisionWorld
from deskbot.geomkin import Capsule, JointState, Pose, Sphere, default_model
from deskbot.percept import PinholeIntrinsics, RenderedFrame
from deskbot.planner import (
    CartesianRrt,
    FollowPathCommand,
    PlanRequest,
    STATUS_FOUND,
    STATUS_UNREACHABLE,
    coverage_gaps,
    fit_collision_primitives,
    follow_path,
    validate_trajectory,
)
from deskbot.qpsolve import warmup
from deskbot.voxelmap import HeightMap2p5D, VoxelMap


@pytest.fixture(scope="module", autouse=True)
def _warm():
    warmup()


@pytest.fixture(scope="module")
def model():
    return default_model()


def _map_of_points(points) -> VoxelMap:
    """VoxelMap holding exactly the given world points (one ray per point)."""
    m = VoxelMap()
    intr = PinholeIntrinsics(1, 1, 1.0, 1.0, 0.0, 0.0)
    for i, p in enumerate(points):
        f = RenderedFrame(
            width=1, height=1,
            rgb=np.full((1, 1, 3), 0.5, np.float32),
            depth=np.ones((1, 1)),
            embedding=np.full((1, 1, 16), 0.25, np.float32),
            semantic=np.full((1, 1, 8), 0.35, np.float32),
            instance=np.zeros((1, 1, 2), np.float32),
            camera_pose=Pose(t=np.asarray(p, float) - [0, 0, 1.0]),
            intrinsics=intr,
            object_index=np.zeros((1, 1), np.int32),
            class_image=np.zeros((1, 1), np.int32),
        )
        m.integrate(f, frame_id=f"p{i}")
    return m


class TestFitPrimitives:
    def test_single_voxel_sphere(self):
        m = _map_of_points([[0.01, 0.01, 0.01]])
        shapes = fit_collision_primitives(m)
        assert len(shapes) == 1
        assert isinstance(shapes[0], Sphere)
        assert shapes[0].radius >= 0.02 * np.sqrt(3) / 2
        assert coverage_gaps(m, shapes) == 0

    def test_collinear_voxels_single_capsule(self):
        pts = [[0.01 + 0.02 * k, 0.01, 0.01] for k in range(20)]
        m = _map_of_points(pts)
        shapes = fit_collision_primitives(m)
        assert len(shapes) == 1
        assert isinstance(shapes[0], Capsule)
        assert coverage_gaps(m, shapes) == 0

    def test_empty_map(self):
        assert fit_collision_primitives(VoxelMap()) == []

    def test_random_cloud_full_coverage_and_cap(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 0.6, size=(400, 3))
        m = _map_of_points(pts)
        shapes = fit_collision_primitives(m, max_shapes=256)
        assert len(shapes) <= 256
        assert coverage_gaps(m, shapes) == 0

    def test_exclusion_and_aabb(self):
        pts = [[0.01, 0.01, 0.01], [0.5, 0.5, 0.5]]
        m = _map_of_points(pts)
        shapes = fit_collision_primitives(m, aabb=((-1, -1, -1), (0.2, 0.2, 0.2)))
        assert coverage_gaps(m, shapes, aabb=((-1, -1, -1), (0.2, 0.2, 0.2))) == 0
        assert all(np.linalg.norm(np.asarray(s.center) - [0.5, 0.5, 0.5]) > 0.3
                   for s in shapes if isinstance(s, Sphere))


def _tool_start(model):
    state = JointState(model.preferred_posture)
    return state, model.fk(state.position, "tool")


class TestPlan:
    def test_goal_equals_start(self, model):
        state, tool = _tool_start(model)
        rrt = CartesianRrt(model)
        res = rrt.plan(PlanRequest(start=state, goal=tool), CollisionWorld.empty())
        assert res.found
        assert len(res.trajectory) == 1

    def test_open_space_near_straight(self, model):
        state, tool = _tool_start(model)
        goal = Pose(tool.q, tool.t + np.array([0.25, -0.1, -0.05]))
        rrt = CartesianRrt(model)
        res = rrt.plan(PlanRequest(start=state, goal=goal, seed=3),
                       CollisionWorld.empty())
        assert res.found
        pts = np.array([p.t for _, p in res.trajectory])
        length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
        straight = float(np.linalg.norm(goal.t - tool.t))
        assert length <= 1.2 * straight
        assert validate_trajectory(res.trajectory, CollisionWorld.empty(), model) is None

    def test_goal_inside_obstacle_unreachable(self, model):
        state, tool = _tool_start(model)
        goal = Pose(tool.q, tool.t + np.array([0.25, 0.0, 0.0]))
        world = CollisionWorld(shapes=(Sphere(tuple(goal.t), 0.08),))
        rrt = CartesianRrt(model)
        res = rrt.plan(
            PlanRequest(start=state, goal=goal, time_budget=5.0, max_nodes=40),
            world,
        )
        assert res.status == STATUS_UNREACHABLE

    @pytest.mark.parametrize("scene", ["wall-with-gap", "cluttered-counter"])
    def test_plans_through_canned_scenes(self, model, scene):
        from deskbot.planner import CANNED_SCENES

        world, state, goal = CANNED_SCENES[scene](model)
        for seed in (0, 1, 2):
            rrt = CartesianRrt(model)
            res = rrt.plan(PlanRequest(start=state, goal=goal, seed=seed), world)
            assert res.found, (scene, seed, res.status)
            assert validate_trajectory(res.trajectory, world, model) is None

    def test_start_in_collision_rejected(self, model):
        state, tool = _tool_start(model)
        world = CollisionWorld(shapes=(Sphere(tuple(tool.t), 0.2),))
        rrt = CartesianRrt(model)
        res = rrt.plan(PlanRequest(start=state, goal=tool), world)
        assert res.status == STATUS_UNREACHABLE


class TestValidate:
    def test_empty_trajectory_ok(self, model):
        assert validate_trajectory([], CollisionWorld.empty(), model) is None

    def test_crafted_violation_located(self, model):
        q0 = model.preferred_posture.copy()
        q1 = q0.copy()
        q1[model.part_dof_indices("arm")[1]] += 0.5
        tool_mid = model.fk(0.5 * (q0 + q1), "tool")
        world = CollisionWorld(shapes=(Sphere(tuple(tool_mid.t), 0.05),))
        bad = validate_trajectory([(q0, None), (q1, None)], world, model)
        assert bad is not None
        idx, desc = bad
        assert idx == 1
        assert "world" in desc


def _open_height_map(size=4.0, res=0.05) -> HeightMap2p5D:
    n = int(size / res)
    return HeightMap2p5D(
        origin_cell=np.array([-n // 2, -n // 2]),
        resolution=res,
        elevation=np.zeros((n, n)),
        traversable=np.ones((n, n), dtype=bool),
        observations=np.ones((n, n), dtype=int),
    )


def _with_block(hm: HeightMap2p5D, lo, hi) -> HeightMap2p5D:
    trav = hm.traversable.copy()
    for i in range(hm.shape[0]):
        for j in range(hm.shape[1]):
            x, y = (hm.origin_cell + [i, j]) * hm.resolution
            if lo[0] <= x <= hi[0] and lo[1] <= y <= hi[1]:
                trav[i, j] = False
    return HeightMap2p5D(hm.origin_cell, hm.resolution, hm.elevation, trav,
                         hm.observations)


class TestFollowPath:
    def test_straight_path_velocity_along(self):
        hm = _open_height_map()
        cmd = FollowPathCommand(path=((0, 0, 0), (1.5, 0, 0)))
        r = follow_path(cmd, hm, (0.0, 0.0, 0.0))
        assert not r.blocked and not r.done
        assert r.velocity[0] > 0.2
        assert abs(r.velocity[1]) < 1e-6
        assert abs(r.velocity[2]) < 1e-6

    def test_speed_cap(self):
        hm = _open_height_map()
        cmd = FollowPathCommand(path=((0, 0, 0), (1.5, 0, 0)), max_speed=0.3)
        r = follow_path(cmd, hm, (0.0, 0.0, 0.0))
        assert np.linalg.norm(r.velocity[:2]) <= 0.3 + 1e-9

    def test_obstacle_deviation_and_clearance(self):
        hm = _with_block(_open_height_map(), (0.6, -0.15), (1.0, 0.15))
        cmd = FollowPathCommand(path=((0, 0, 0), (1.8, 0, 0)), max_speed=0.4,
                                inflation_radius=0.25)
        pose = np.array([0.0, 0.0, 0.0])
        min_clear = np.inf
        done = False
        for _ in range(1500):
            r = follow_path(cmd, hm, pose)
            assert not r.blocked
            if r.done:
                done = True
                break
            c, s = np.cos(pose[2]), np.sin(pose[2])
            vx = c * r.velocity[0] - s * r.velocity[1]
            vy = s * r.velocity[0] + c * r.velocity[1]
            pose += np.array([vx, vy, r.velocity[2]]) * 0.02
            # clearance to the blocked rectangle
            dx = max(0.6 - pose[0], 0.0, pose[0] - 1.0)
            dy = max(-0.15 - pose[1], 0.0, pose[1] - 0.15)
            min_clear = min(min_clear, float(np.hypot(dx, dy)))
        assert done
        assert min_clear >= 0.25 - 0.05  # swept-disc discretization slack

    def test_surrounded_blocked(self):
        hm = _open_height_map()
        trav = np.zeros_like(hm.traversable)
        hm = HeightMap2p5D(hm.origin_cell, hm.resolution, hm.elevation, trav,
                           hm.observations)
        cmd = FollowPathCommand(path=((0, 0, 0), (1.5, 0, 0)))
        r = follow_path(cmd, hm, (0.0, 0.0, 0.0))
        assert r.blocked
        assert np.all(r.velocity == 0.0)

    def test_empty_path_rejected(self):
        with pytest.raises(ValueError):
            FollowPathCommand(path=())
