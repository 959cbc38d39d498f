"""Cartesian-space RRT with the whole-body QP IK as the steering function."""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from ..collision import CollisionWorld
from ..geomkin import JointState, Pose, RobotModel, shape_distance
from ..geomkin.pose import quat_mul, quat_conj, quat_from_rotvec, rotvec_from_quat
from ..wbc import ControllerSpec, WholeBodyCommand, WholeBodyController, part_dofs

STATUS_FOUND = "found"
STATUS_TIMEOUT = "timeout"
STATUS_UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class PlanRequest:
    start: JointState
    goal: Pose
    part: str = "arm+torso"
    frame: str = "tool"
    time_budget: float = 10.0
    step_linear: float = 0.12  # m, max Cartesian extension per tree edge
    step_angular: float = 0.6  # rad
    goal_bias: float = 0.1
    max_nodes: int = 600
    goal_tolerance_linear: float = 0.005
    goal_tolerance_angular: float = 0.02
    seed: int = 0
    shortcut_attempts: int = 200  # 0 disables smoothing (determinism tests)


@dataclass(frozen=True)
class PlanResult:
    status: str
    trajectory: list  # [(q, Pose)] waypoints
    nodes: int = 0
    elapsed: float = 0.0

    @property
    def found(self) -> bool:
        return self.status == STATUS_FOUND


def _point_in_world(p: np.ndarray, world: CollisionWorld) -> bool:
    from ..geomkin import Capsule, Sphere

    for s, pose in zip(world.shapes, world.shape_poses):
        if isinstance(s, Sphere):
            if np.linalg.norm(pose.apply(np.asarray(s.center)) - p) <= s.radius:
                return True
        elif isinstance(s, Capsule):
            a, b = pose.apply(np.asarray(s.a)), pose.apply(np.asarray(s.b))
            ab = b - a
            t = np.clip((p - a) @ ab / max(float(ab @ ab), 1e-12), 0.0, 1.0)
            if np.linalg.norm(p - (a + t * ab)) <= s.radius:
                return True
    return False


def _pose_gap(a: Pose, b: Pose):
    lin = float(np.linalg.norm(a.t - b.t))
    dq = quat_mul(b.q, quat_conj(a.q))
    ang = float(np.linalg.norm(rotvec_from_quat(dq if dq[0] >= 0 else -dq)))
    return lin, ang


def _interp_pose(a: Pose, b: Pose, alpha: float) -> Pose:
    lin = a.t + alpha * (b.t - a.t)
    dq = quat_mul(b.q, quat_conj(a.q))
    if dq[0] < 0:
        dq = -dq
    rv = rotvec_from_quat(dq) * alpha
    return Pose(quat_mul(quat_from_rotvec(rv), a.q), lin)


class CartesianRrt:
    """Planner owns a private controller instance for steering."""

    def __init__(self, model: RobotModel, controller: WholeBodyController | None = None):
        self.model = model
        if controller is None:
            # planning-speed profile: smoothness does not matter while
            # steering, only the states visited
            from ..wbc import WbcConfig

            cfg = WbcConfig(kp_linear=6.0, kp_angular=6.0,
                            max_linear_speed=0.6, max_angular_speed=3.0)
            controller = WholeBodyController(model, cfg)
        self.controller = controller
        self.steer_dt = 0.05
        self.steer_margin = 0.0  # states accepted while strictly separated

    # -- collision checking ---------------------------------------------------

    def state_collision_free(self, q: np.ndarray, world: CollisionWorld) -> bool:
        model = self.model
        poses = model.shape_poses(q)
        for i, j in model.self_collision_pairs:
            if shape_distance(model.shapes[i].shape, poses[i],
                              model.shapes[j].shape, poses[j]) <= self.steer_margin:
                return False
        moving = [(at.shape, poses[k]) for k, at in enumerate(model.shapes)]
        for att in world.attachments:
            ap = model.fk(q, att.frame)
            moving.extend((s, ap) for s in att.shapes)
        for s, p in moving:
            for sw, pw in zip(world.shapes, world.shape_poses):
                if shape_distance(s, p, sw, pw) <= self.steer_margin:
                    return False
        return True

    # -- steering ---------------------------------------------------------------

    def steer(self, q0: np.ndarray, target: Pose, world: CollisionWorld,
              req: PlanRequest, max_ticks: int = 50):
        """QP-IK ticks from q0 towards target with collision rows active.

        Returns (q_path, reached): q_path holds collision-free states only
        (partial progress allowed); reached marks target attainment.
        """
        ctrl = self.controller
        cmd = WholeBodyCommand([ControllerSpec(req.part, "task-pose",
                                               pose_target=target, frame=req.frame)])
        ctrl.set_command(cmd)
        ctrl.reset_motion_state()
        state = JointState(q0)
        path = []
        last_gap = None
        stall = 0
        for _ in range(max_ticks):
            problem = ctrl.assemble_qp(state, cmd, world, self.steer_dt,
                                       relax_acceleration=True)
            sol = ctrl.solver.solve(problem, warm_start=ctrl._warm)
            if not sol.ok:
                break
            if np.abs(sol.x).max() < 1e-3:  # pinned by constraints
                break
            ctrl._warm = sol.x
            ctrl._prev_dq = sol.x
            state = state.advanced(sol.x, self.steer_dt)
            if not self.state_collision_free(state.position, world):
                break
            path.append(state.position.copy())
            cur = self.model.fk(state.position, req.frame)
            lin, ang = _pose_gap(cur, target)
            if lin <= req.goal_tolerance_linear and ang <= req.goal_tolerance_angular:
                return path, True
            gap = lin + 0.3 * ang
            if last_gap is not None and gap > last_gap - 1e-5:
                stall += 1
                if stall >= 6:
                    break
            else:
                stall = 0
            last_gap = gap
        return path, False

    # -- planning ---------------------------------------------------------------

    def plan(self, req: PlanRequest, world: CollisionWorld) -> PlanResult:
        t0 = _time.perf_counter()
        model = self.model
        rng = np.random.default_rng(req.seed)
        q0 = req.start.position.copy()
        if not self.state_collision_free(q0, world):
            return PlanResult(STATUS_UNREACHABLE, [], 0, _time.perf_counter() - t0)
        if _point_in_world(req.goal.t, world):
            return PlanResult(STATUS_UNREACHABLE, [], 0, _time.perf_counter() - t0)
        start_pose = model.fk(q0, req.frame)
        glin, gang = _pose_gap(start_pose, req.goal)
        if glin <= req.goal_tolerance_linear and gang <= req.goal_tolerance_angular:
            return PlanResult(STATUS_FOUND, [(q0, start_pose)], 1,
                              _time.perf_counter() - t0)

        lo = np.minimum(start_pose.t, req.goal.t) - 0.6
        hi = np.maximum(start_pose.t, req.goal.t) + 0.6

        nodes_q = [q0]
        nodes_pose = [start_pose]
        parents = [-1]
        edges: list = [[]]  # per node: list of intermediate q on the edge from parent

        def sample() -> Pose:
            # positions uniform over the workspace box; orientations explore
            # a bounded cone around the goal's so steering keeps traction
            # while the wrist can still snake around clutter
            if rng.random() < req.goal_bias:
                return req.goal
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            perturb = Pose.from_axis_angle(axis, rng.uniform(0.0, 1.0))
            return Pose(quat_mul(perturb.q, req.goal.q), rng.uniform(lo, hi))

        while (len(nodes_q) < req.max_nodes
               and _time.perf_counter() - t0 < req.time_budget):
            target = sample()
            # position-dominant nearest metric: radians would otherwise
            # drown the meters and make selection effectively random
            gaps = [lin + 0.15 * ang
                    for lin, ang in (_pose_gap(p, target) for p in nodes_pose)]
            ni = int(np.argmin(gaps))
            lin, ang = _pose_gap(nodes_pose[ni], target)
            alpha = min(1.0, req.step_linear / lin if lin > 1e-9 else 1.0,
                        req.step_angular / ang if ang > 1e-9 else 1.0)
            stepped = _interp_pose(nodes_pose[ni], target, alpha)
            path, reached = self.steer(nodes_q[ni], stepped, world, req)
            if not path:
                continue
            q_new = path[-1]
            pose_new = model.fk(q_new, req.frame)
            # drop extensions that went nowhere
            if sum(_pose_gap(pose_new, nodes_pose[ni])) < 1e-4:
                continue
            nodes_q.append(q_new)
            nodes_pose.append(pose_new)
            parents.append(ni)
            edges.append(path)
            # try connecting to the goal from nearby new nodes
            glin, gang = _pose_gap(pose_new, req.goal)
            if glin <= req.goal_tolerance_linear and gang <= req.goal_tolerance_angular:
                return self._finish(nodes_q, nodes_pose, parents, edges,
                                    len(nodes_q) - 1, req, world, t0)
            if glin > 2.5 * req.step_linear:
                continue
            gpath, greached = self.steer(q_new, req.goal, world, req)
            if greached:
                nodes_q.append(gpath[-1])
                nodes_pose.append(model.fk(gpath[-1], req.frame))
                parents.append(len(nodes_q) - 2)
                edges.append(gpath)
                return self._finish(nodes_q, nodes_pose, parents, edges,
                                    len(nodes_q) - 1, req, world, t0)
        status = STATUS_TIMEOUT if _time.perf_counter() - t0 >= req.time_budget \
            else STATUS_UNREACHABLE
        return PlanResult(status, [], len(nodes_q), _time.perf_counter() - t0)

    def _finish(self, nodes_q, nodes_pose, parents, edges, leaf, req, world, t0):
        chain = []
        i = leaf
        while i >= 0:
            chain.append(i)
            i = parents[i]
        chain.reverse()
        qs: list[np.ndarray] = [nodes_q[chain[0]]]
        for i in chain[1:]:
            qs.extend(edges[i])
        qs = self._shortcut(qs, req, world)
        traj = [(q, self.model.fk(q, req.frame)) for q in qs]
        return PlanResult(STATUS_FOUND, traj, len(nodes_q),
                          _time.perf_counter() - t0)

    def _shortcut(self, qs: list, req: PlanRequest, world: CollisionWorld) -> list:
        """Single shortcut pass: straight joint-space cuts where collision-free."""
        if req.shortcut_attempts <= 0 or len(qs) < 3:
            return qs
        rng = np.random.default_rng(req.seed + 1)
        qs = list(qs)
        for _ in range(req.shortcut_attempts):
            if len(qs) < 3:
                break
            i = int(rng.integers(0, len(qs) - 2))
            j = int(rng.integers(i + 2, len(qs)))
            a, b = qs[i], qs[j]
            steps = max(2, int(np.max(np.abs(b - a)) / 0.02))
            ok = True
            for k in range(1, steps):
                q = a + (b - a) * (k / steps)
                if not self.state_collision_free(q, world):
                    ok = False
                    break
            if ok:
                qs = qs[: i + 1] + qs[j:]
        return qs


def validate_trajectory(traj, world: CollisionWorld, model: RobotModel,
                        lin_resolution: float = 0.001, ang_resolution: float = 0.005):
    """Brute-force oracle: densely interpolates in joint space and checks
    every shape pair.  Returns None, or (waypoint index, description)."""
    if not traj:
        return None
    qs = [t[0] if isinstance(t, tuple) else t for t in traj]
    prismatic = np.zeros(model.nq, dtype=bool)
    i = 0
    for j in model.joints:
        if j.type == "planar":
            prismatic[i : i + 2] = True
            i += 3
        else:
            if j.type == "prismatic":
                prismatic[i] = True
            i += 1
    res = np.where(prismatic, lin_resolution, ang_resolution)

    def check(q, wp):
        poses = model.shape_poses(q)
        for a, b in model.self_collision_pairs:
            if shape_distance(model.shapes[a].shape, poses[a],
                              model.shapes[b].shape, poses[b]) <= 0:
                return (wp, f"self {model.shapes[a].name}/{model.shapes[b].name}")
        moving = [(at.shape, poses[k]) for k, at in enumerate(model.shapes)]
        for att in world.attachments:
            ap = model.fk(q, att.frame)
            moving.extend((s, ap) for s in att.shapes)
        for s, p in moving:
            for wi, (sw, pw) in enumerate(zip(world.shapes, world.shape_poses)):
                if shape_distance(s, p, sw, pw) <= 0:
                    return (wp, f"world shape {wi}")
        return None

    bad = check(qs[0], 0)
    if bad:
        return bad
    for w in range(1, len(qs)):
        a, b = qs[w - 1], qs[w]
        steps = int(np.max(np.abs(b - a) / res)) + 1
        for k in range(1, steps + 1):
            q = a + (b - a) * (k / steps)
            bad = check(q, w)
            if bad:
                return bad
    return None
