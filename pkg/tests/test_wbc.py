"""Whole-body controller tests: command validation, QP assembly, admittance,
safety faults, and closed-loop tracking properties."""

import numpy as np
import pytest
import yaml
from importlib import resources

from deskbot.collision import CollisionWorld
from deskbot.geomkin import JointState, Pose, Sphere, default_model, shape_distance
from deskbot.geomkin.model import model_from_dict
from deskbot.qpsolve import warmup
from deskbot.wbc import (
    CommandError,
    ControllerSpec,
    WbcConfig,
    WholeBodyCommand,
    WholeBodyController,
    validate_command,
)

DT = 0.005


@pytest.fixture(scope="module", autouse=True)
def _warm():
    warmup()


@pytest.fixture(scope="module")
def model():
    return default_model()


def _state(model, q=None):
    return JointState(model.preferred_posture if q is None else q)


def _integrate(model, controller, cmd, state, world=None, forces=None, ticks=100):
    states = [state]
    results = []
    for _ in range(ticks):
        r = controller.tick(state, cmd, world, forces, DT)
        results.append(r)
        state = state.advanced(r.command, DT)
        states.append(state)
    return states, results


class TestValidate:
    def test_disjoint_parts_ok(self, model):
        cmd = WholeBodyCommand([
            ControllerSpec("arm", "task-pose", pose_target=Pose(t=[0.5, -0.2, 0.9])),
            ControllerSpec("head", "look-at", lookat_target=np.array([1.0, 0, 0.5])),
        ])
        validate_command(cmd, model)

    def test_same_part_twice_overlaps(self, model):
        cmd = WholeBodyCommand([
            ControllerSpec("arm", "task-pose", pose_target=Pose.identity()),
            ControllerSpec("arm", "joint-velocity", joint_target=np.zeros(7)),
        ])
        with pytest.raises(CommandError, match="overlap") as e:
            validate_command(cmd, model)
        assert "arm:task-pose" in str(e.value)
        assert "arm:joint-velocity" in str(e.value)

    def test_composite_part_overlap(self, model):
        cmd = WholeBodyCommand([
            ControllerSpec("arm+torso", "task-pose", pose_target=Pose.identity()),
            ControllerSpec("torso", "joint-position", joint_target=np.zeros(5)),
        ])
        with pytest.raises(CommandError, match="overlap"):
            validate_command(cmd, model)

    def test_unknown_part(self, model):
        cmd = WholeBodyCommand([
            ControllerSpec("tentacle", "joint-velocity", joint_target=np.zeros(3))
        ])
        with pytest.raises(CommandError, match="unknown part"):
            validate_command(cmd, model)

    def test_target_mismatch(self, model):
        cmd = WholeBodyCommand([
            ControllerSpec("arm", "joint-position", joint_target=np.zeros(3))
        ])
        with pytest.raises(CommandError):
            validate_command(cmd, model)


class TestAssemble:
    def test_at_target_zero_velocity(self, model):
        # posture weight zero: optimum is dq = 0 when already at target
        cfg = WbcConfig(posture_weight=0.0)
        c = WholeBodyController(model, cfg)
        state = _state(model)
        target = model.fk(state.position, "tool")
        cmd = WholeBodyCommand([ControllerSpec("arm+torso", "task-pose",
                                               pose_target=target)])
        c.set_command(cmd)
        p = c.assemble_qp(state, cmd, CollisionWorld.empty(), DT)
        sol = c.solver.solve(p)
        assert sol.ok
        assert np.abs(sol.x).max() < 1e-7

    def test_matches_damped_least_squares(self, model):
        # unconstrained regime (tiny error): QP equals the closed-form
        # damped pseudo-inverse step on the controlled dofs
        cfg = WbcConfig(posture_weight=0.0)
        c = WholeBodyController(model, cfg)
        state = _state(model)
        cur = model.fk(state.position, "tool")
        target = Pose(cur.q, cur.t + np.array([0.001, 0, 0]))
        cmd = WholeBodyCommand([ControllerSpec("arm", "task-pose", pose_target=target)])
        c.set_command(cmd)
        p = c.assemble_qp(state, cmd, CollisionWorld.empty(), DT)
        sol = c.solver.solve(p)
        assert sol.ok

        dofs = model.part_dof_indices("arm")
        J = model.jacobian(state.position, "tool")
        Jm = np.zeros_like(J)
        Jm[:, dofs] = J[:, dofs]
        lin = target.t - cur.t
        v = np.concatenate([cfg.kp_linear * lin, np.zeros(3)])
        w = cfg.tracking_weight
        dq_ref = np.linalg.solve(w * Jm.T @ Jm + cfg.regularization * np.eye(model.nq),
                                 w * Jm.T @ v)
        assert np.abs(sol.x - dq_ref).max() < 1e-6

    def test_damper_row_at_margin(self, model):
        # obstacle exactly at the margin: approach speed along the normal <= 0
        cfg = WbcConfig()
        c = WholeBodyController(model, cfg)
        state = _state(model)
        tool = model.fk(state.position, "tool").t
        palm_shape_idx = [s.name for s in model.shapes].index("palm")
        palm_pose = model.shape_poses(state.position)[palm_shape_idx]
        # place a sphere at margin distance in front of the palm along +x
        obstacle = Sphere((0, 0, 0), 0.05)
        d_target = cfg.collision_margin
        probe = Pose(t=tool + np.array([0.05 + 0.04 + d_target + 0.065, 0.03, 0.1]))
        world = CollisionWorld(shapes=(obstacle,), shape_poses=(probe,))
        target = Pose(t=tool + np.array([0.4, 0, 0]))
        cmd = WholeBodyCommand([ControllerSpec("arm+torso", "task-pose",
                                               pose_target=target)])
        c.set_command(cmd)
        p = c.assemble_qp(state, cmd, world, DT)
        sol = c.solver.solve(p)
        assert sol.ok
        # velocity of every robot shape towards the obstacle stays damped
        q2 = state.position + sol.x * DT
        poses1 = model.shape_poses(state.position)
        poses2 = model.shape_poses(q2)
        for i, at in enumerate(model.shapes):
            d1 = shape_distance(at.shape, poses1[i], obstacle, probe)
            d2 = shape_distance(at.shape, poses2[i], obstacle, probe)
            if d1 < cfg.collision_activation:
                approach = (d1 - d2) / DT
                assert approach <= cfg.damper_gain * (d1 - cfg.collision_margin) + 1e-3


class TestAdmittance:
    def test_zero_force_error_equals_task_pose(self, model):
        state = _state(model)
        target = Pose(t=model.fk(state.position, "tool").t + np.array([0.05, 0, 0]))
        setp = np.array([0, 0, 0, 0, 0, 0.0])
        gain = np.full(6, 0.001)
        cmd_adm = WholeBodyCommand([ControllerSpec(
            "arm", "task-admittance", pose_target=target,
            admittance_gain=gain, force_setpoint=setp)])
        cmd_pose = WholeBodyCommand([ControllerSpec("arm", "task-pose",
                                                    pose_target=target)])
        ca = WholeBodyController(model)
        cp = WholeBodyController(model)
        ra = ca.tick(state, cmd_adm, forces={"arm": np.zeros(6)}, dt=DT)
        rp = cp.tick(state, cmd_pose, dt=DT)
        assert np.allclose(ra.command, rp.command, atol=1e-10)

    def test_constant_force_drifts_target(self, model):
        state = _state(model)
        target = model.fk(state.position, "tool")
        gain = np.zeros(6)
        gain[0] = 0.001  # m/s per N along +x
        cmd = WholeBodyCommand([ControllerSpec(
            "arm", "task-admittance", pose_target=target,
            admittance_gain=gain, force_setpoint=np.zeros(6))])
        c = WholeBodyController(model)
        forces = {"arm": np.array([10.0, 0, 0, 0, 0, 0])}
        for k in range(100):
            c.tick(state, cmd, forces=forces, dt=DT)
        offset = c._adm_offsets[0]
        # 10 N * 0.001 m/s/N = 0.01 m/s drift rate
        assert abs(offset[0] - 0.01 * 100 * DT) < 1e-12
        assert np.abs(offset[1:]).max() == 0.0

    def test_axis_mask_restricts_drift(self, model):
        state = _state(model)
        target = model.fk(state.position, "tool")
        gain = np.full(6, 0.001)
        cmd = WholeBodyCommand([ControllerSpec(
            "arm", "task-admittance", pose_target=target,
            admittance_gain=gain, force_setpoint=np.zeros(6),
            axis_mask=(True, False, False, False, False, False))])
        c = WholeBodyController(model)
        c.tick(state, cmd, forces={"arm": np.array([5.0, 5, 5, 1, 1, 1])}, dt=DT)
        off = c._adm_offsets[0]
        assert off[0] != 0.0
        assert np.abs(off[1:]).max() == 0.0


class TestTickLoop:
    def test_tracking_error_strictly_decreases(self, model):
        state = _state(model)
        cur = model.fk(state.position, "tool")
        target = Pose(cur.q, cur.t + np.array([0.03, 0.02, -0.02]))
        cmd = WholeBodyCommand([ControllerSpec("arm+torso", "task-pose",
                                               pose_target=target)])
        c = WholeBodyController(model)
        errs = []
        s = state
        for _ in range(50):
            r = c.tick(s, cmd, dt=DT)
            assert r.ok
            errs.append(float(np.linalg.norm(r.tracking_errors[0])))
            s = s.advanced(r.command, DT)
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_velocity_acceleration_boxes_exact(self, model):
        state = _state(model)
        target = Pose(t=model.fk(state.position, "tool").t + np.array([0.3, 0.2, 0.1]))
        cmd = WholeBodyCommand([ControllerSpec("arm+torso", "task-pose",
                                               pose_target=target)])
        c = WholeBodyController(model)
        s = state
        prev = np.zeros(model.nq)
        for _ in range(120):
            r = c.tick(s, cmd, dt=DT)
            assert r.ok
            assert np.all(np.abs(r.command) <= model.vel_limit + 1e-8)
            assert np.all(np.abs(r.command - prev) <= model.acc_limit * DT + 1e-8)
            prev = r.command
            s = s.advanced(r.command, DT)

    def test_obstacle_margin_never_violated(self, model):
        cfg = WbcConfig()
        state = _state(model)
        tool = model.fk(state.position, "tool").t
        obstacle = Sphere((0, 0, 0), 0.06)
        obs_pose = Pose(t=tool + np.array([0.15, 0.0, 0.0]))
        world = CollisionWorld(shapes=(obstacle,), shape_poses=(obs_pose,))
        target = Pose(t=tool + np.array([0.35, 0, 0]))  # behind the obstacle
        cmd = WholeBodyCommand([ControllerSpec("arm+torso", "task-pose",
                                               pose_target=target)])
        c = WholeBodyController(model, cfg)
        s = state
        min_d = np.inf
        for _ in range(300):
            r = c.tick(s, cmd, world, dt=DT)
            assert r.ok
            s = s.advanced(r.command, DT)
            poses = model.shape_poses(s.position)
            for i in range(len(model.shapes)):
                min_d = min(min_d, shape_distance(model.shapes[i].shape, poses[i],
                                                  obstacle, obs_pose))
        assert min_d >= cfg.collision_margin - 1e-4

    def test_look_at_converges(self, model):
        state = _state(model)
        point = np.array([1.5, 0.6, 0.4])
        cmd = WholeBodyCommand([ControllerSpec("head", "look-at",
                                               lookat_target=point)])
        c = WholeBodyController(model)
        s = state
        for _ in range(1200):
            r = c.tick(s, cmd, dt=DT)
            assert r.ok
            s = s.advanced(r.command, DT)
        cam = model.fk(s.position, "camera")
        axis = cam.rotation_matrix()[:, 2]
        d = point - cam.t
        d /= np.linalg.norm(d)
        angle = np.arccos(np.clip(axis @ d, -1, 1))
        assert angle < 1e-3

    def test_deterministic_replay(self, model):
        state = _state(model)
        target = Pose(t=model.fk(state.position, "tool").t + np.array([0.05, 0.03, 0]))
        forces = {"arm": np.array([1.0, 0, 0, 0, 0, 0])}

        def run():
            cmd = WholeBodyCommand([ControllerSpec(
                "arm", "task-admittance", pose_target=target,
                admittance_gain=np.full(6, 1e-3), force_setpoint=np.zeros(6))])
            c = WholeBodyController(model)
            s = state
            outs = []
            for _ in range(40):
                r = c.tick(s, cmd, forces=forces, dt=DT)
                outs.append(r.command.copy())
                s = s.advanced(r.command, DT)
            return np.vstack(outs)

        a, b = run(), run()
        assert np.array_equal(a, b)

    def test_chassis_position_drive(self, model):
        state = _state(model)
        cmd = WholeBodyCommand([ControllerSpec(
            "chassis", "chassis-position",
            pose_target=Pose.from_xyzrpy(0.4, 0.2, 0, yaw=0.5))])
        c = WholeBodyController(model)
        s = state
        for _ in range(2000):
            r = c.tick(s, cmd, dt=DT)
            assert r.ok
            s = s.advanced(r.command, DT)
        assert abs(s.position[0] - 0.4) < 1e-3
        assert abs(s.position[1] - 0.2) < 1e-3
        assert abs(s.position[2] - 0.5) < 1e-3


class TestFaults:
    def test_self_collision_fault(self, model):
        # search a within-limits configuration that self-collides
        rng = np.random.default_rng(0)
        dofs = model.part_dof_indices("arm")
        q2 = None
        for _ in range(4000):
            q = model.preferred_posture.copy()
            q[dofs] = rng.uniform(model.pos_lower[dofs], model.pos_upper[dofs])
            poses = model.shape_poses(q)
            if any(
                shape_distance(model.shapes[i].shape, poses[i],
                               model.shapes[j].shape, poses[j]) < -0.01
                for i, j in model.self_collision_pairs
            ):
                q2 = q
                break
        assert q2 is not None, "no colliding configuration found for the fault test"
        state = JointState(q2)
        cmd = WholeBodyCommand([ControllerSpec(
            "arm", "joint-position", joint_target=q2[dofs])])
        c = WholeBodyController(model)
        r = c.tick(state, cmd, dt=DT)
        assert r.fault is not None
        assert r.fault.kind == "self-collision"
        assert np.all(r.command == 0.0)

    def test_com_violation_fault(self, model):
        # lighter base makes the lean actually tip the CoM out
        doc = yaml.safe_load(
            resources.files("deskbot.data").joinpath("robot_18dof.yaml").read_text()
        )
        for mass in doc["masses"]:
            if mass["frame"] == "base_link":
                mass["mass"] = 3.0
        light = model_from_dict(doc)
        q = light.preferred_posture.copy()
        tdofs = light.part_dof_indices("torso")
        q[tdofs[1]] = 1.5
        q[tdofs[2]] = 1.5
        q[light.part_dof_indices("arm")] = 0.0  # straight arm lengthens the lever
        state = JointState(q)
        cmd = WholeBodyCommand([ControllerSpec(
            "torso", "joint-position", joint_target=q[tdofs])])
        c = WholeBodyController(light)
        r = c.tick(state, cmd, dt=DT)
        assert r.fault is not None
        assert r.fault.kind == "com-violation"
        assert np.all(r.command == 0.0)

    def test_com_constraint_prevents_tipping(self, model):
        doc = yaml.safe_load(
            resources.files("deskbot.data").joinpath("robot_18dof.yaml").read_text()
        )
        for mass in doc["masses"]:
            if mass["frame"] == "base_link":
                mass["mass"] = 3.0
        light = model_from_dict(doc)
        cfg = WbcConfig()
        q = light.preferred_posture.copy()
        tdofs = light.part_dof_indices("torso")
        target = q[tdofs].copy()
        target[1] = 1.5
        target[2] = 1.5  # would put the CoM outside if tracked fully
        cmd = WholeBodyCommand([ControllerSpec("torso", "joint-position",
                                               joint_target=target)])
        c = WholeBodyController(light, cfg)
        s = JointState(q)
        for _ in range(600):
            r = c.tick(s, cmd, dt=DT)
            assert r.ok, r.fault
            s = s.advanced(r.command, DT)
            # planar CoM stays inside the shrunk polygon throughout
            frames = light.fk_all(s.position)
            Rb, pb = frames["base_link"]
            rel = (Rb.T @ (light.com(s.position) - pb))[:2]
            pts = light.footprint
            for i in range(len(pts)):
                a, b = pts[i], pts[(i + 1) % len(pts)]
                e = b - a
                n2 = np.array([e[1], -e[0]])
                n2 /= np.linalg.norm(n2)
                assert n2 @ rel <= n2 @ a - cfg.com_margin + 1e-3
