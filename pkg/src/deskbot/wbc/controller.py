"""Whole-body hybrid task-space controller.

Each tick: admittance modes shift their targets from measured wrench error,
a QP over joint velocities is assembled (tracking + regularization + posture
costs; joint box, collision-damper, and CoM-support constraints) and solved,
then the post-integration state is safety-checked.  Faults zero the command.
"""

from __future__ import annotations

import numpy as np

from ..collision import CollisionWorld
from ..geomkin import JointState, Pose, RobotModel, shape_closest_points, shape_distance
from ..geomkin.pose import _skew, rotvec_from_quat, quat_mul, quat_conj
from ..qpsolve import QpProblem, QpSolver, INF
from .config import WbcConfig
from .specs import (
    CommandError,
    ControllerSpec,
    Fault,
    TickResult,
    WholeBodyCommand,
    part_dofs,
    validate_command,
)


def _pose_error(current: Pose, target: Pose):
    """(linear, angular) world-frame error taking current to target."""
    lin = target.t - current.t
    dq = quat_mul(target.q, quat_conj(current.q))
    if dq[0] < 0:
        dq = -dq
    return lin, rotvec_from_quat(dq)


def _clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > limit > 0:
        return v * (limit / n)
    return v


class WholeBodyController:
    """One instance per control thread; owns mutable per-tick workspace."""

    def __init__(self, model: RobotModel, config: WbcConfig | None = None):
        self.model = model
        self.config = config or WbcConfig()
        self.solver = QpSolver()
        self._cmd: WholeBodyCommand | None = None
        self._adm_offsets: dict[int, np.ndarray] = {}
        self._prev_dq = np.zeros(model.nq)
        self._warm: np.ndarray | None = None

    # -- command management --------------------------------------------------

    def set_command(self, cmd: WholeBodyCommand):
        validate_command(cmd, self.model)
        self._cmd = cmd
        self._adm_offsets = {}

    @property
    def command(self) -> WholeBodyCommand | None:
        return self._cmd

    def reset_motion_state(self):
        self._prev_dq = np.zeros(self.model.nq)
        self._warm = None

    # -- QP assembly ----------------------------------------------------------

    def assemble_qp(self, state: JointState, cmd: WholeBodyCommand,
                    world: CollisionWorld, dt: float,
                    adm_offsets: dict[int, np.ndarray] | None = None,
                    relax_acceleration: bool = False) -> QpProblem:
        model, cfg = self.model, self.config
        n = model.nq
        q = state.position
        adm_offsets = adm_offsets if adm_offsets is not None else self._adm_offsets

        H = np.zeros((n, n))
        g = np.zeros(n)
        claimed = np.zeros(n, dtype=bool)

        for si, spec in enumerate(cmd.specs):
            dofs = part_dofs(model, spec.part)
            claimed[dofs] = True
            J, v = self._spec_rows(state, spec, adm_offsets.get(si))
            if J is None:
                continue
            mask = np.zeros(n, dtype=bool)
            mask[dofs] = True
            J = J * mask[None, :]
            H += 2.0 * spec.weight * cfg.tracking_weight * (J.T @ J)
            g -= 2.0 * spec.weight * cfg.tracking_weight * (J.T @ v)

        H += 2.0 * cfg.regularization * np.eye(n)
        posture_mask = np.zeros(n, dtype=bool)
        for part in ("torso", "arm", "head"):
            if part in model.parts:
                posture_mask[model.part_dof_indices(part)] = True
        mu = cfg.posture_weight * dt * dt
        v_post = (model.preferred_posture - q) / dt
        D = np.diag(posture_mask.astype(float))
        H += 2.0 * mu * D
        g -= 2.0 * mu * (posture_mask * v_post)

        rows, lows, ups = [], [], []

        # combined position/velocity/acceleration box, one identity row set
        lo_pos = (model.pos_lower - q) / dt
        up_pos = (model.pos_upper - q) / dt
        lo_vel, up_vel = -model.vel_limit, model.vel_limit
        if relax_acceleration:
            lo_acc, up_acc = lo_vel, up_vel
        else:
            lo_acc = self._prev_dq - model.acc_limit * dt
            up_acc = self._prev_dq + model.acc_limit * dt
        lo = np.maximum(np.maximum(lo_pos, lo_vel), lo_acc)
        up = np.minimum(np.minimum(up_pos, up_vel), up_acc)
        crossed = lo > up
        if crossed.any():  # acceleration yields before position/velocity
            lo = np.where(crossed, np.maximum(lo_pos, lo_vel), lo)
            up = np.where(crossed, np.minimum(up_pos, up_vel), up)
        # uncontrolled parts hold still
        lo = np.where(claimed, lo, np.maximum(lo, 0.0))
        up = np.where(claimed, up, np.minimum(up, 0.0))
        bad = lo > up
        if bad.any():
            mid = 0.5 * (lo + up)
            lo = np.where(bad, mid, lo)
            up = np.where(bad, mid, up)
        rows.append(np.eye(n))
        lows.append(lo)
        ups.append(up)

        # collision velocity dampers
        damper = self._collision_rows(state, world, dt)
        if damper is not None:
            rows.append(damper[0])
            lows.append(np.full(len(damper[1]), -INF))
            ups.append(damper[1])

        # CoM support polygon (chassis frame)
        com_rows = self._com_rows(state, dt)
        if com_rows is not None:
            rows.append(com_rows[0])
            lows.append(np.full(len(com_rows[1]), -INF))
            ups.append(com_rows[1])

        # gravity-torque proxy: damper on horizontal tool reach
        grav = self._gravity_rows(state, world)
        if grav is not None:
            rows.append(grav[0])
            lows.append(np.full(len(grav[1]), -INF))
            ups.append(grav[1])

        A = np.vstack(rows)
        return QpProblem(H, g, A, np.concatenate(lows), np.concatenate(ups))

    def _spec_rows(self, state: JointState, spec: ControllerSpec,
                   offset: np.ndarray | None):
        model, cfg = self.model, self.config
        q = state.position
        mode = spec.mode
        if mode in ("task-pose", "task-admittance"):
            target = spec.pose_target
            if offset is not None:
                target = Pose.exp(offset).compose(target)
            cur = model.fk(q, spec.frame)
            lin, ang = _pose_error(cur, target)
            v = np.concatenate([
                _clamp_norm(cfg.kp_linear * lin, cfg.max_linear_speed),
                _clamp_norm(cfg.kp_angular * ang, cfg.max_angular_speed),
            ])
            return model.jacobian(q, spec.frame), v
        if mode == "task-velocity":
            return model.jacobian(q, spec.frame), np.asarray(spec.twist_target, float)
        if mode in ("joint-position", "joint-admittance"):
            dofs = part_dofs(model, spec.part)
            target = np.asarray(spec.joint_target, float)
            if offset is not None:
                target = target + offset
            err = target - q[dofs]
            v = np.clip(cfg.kp_joint * err, -model.vel_limit[dofs], model.vel_limit[dofs])
            J = np.zeros((len(dofs), model.nq))
            J[np.arange(len(dofs)), dofs] = 1.0
            return J, v
        if mode == "joint-velocity":
            dofs = part_dofs(model, spec.part)
            v = np.clip(np.asarray(spec.joint_target, float),
                        -model.vel_limit[dofs], model.vel_limit[dofs])
            J = np.zeros((len(dofs), model.nq))
            J[np.arange(len(dofs)), dofs] = 1.0
            return J, v
        if mode == "chassis-position":
            dofs = part_dofs(model, spec.part)
            tx, ty = spec.pose_target.t[0], spec.pose_target.t[1]
            tyaw = spec.pose_target.rotvec()[2]
            err = np.array([tx - q[dofs[0]], ty - q[dofs[1]],
                            _wrap(tyaw - q[dofs[2]])])
            v = np.clip(cfg.kp_chassis * err,
                        -model.vel_limit[dofs], model.vel_limit[dofs])
            J = np.zeros((3, model.nq))
            J[np.arange(3), dofs] = 1.0
            return J, v
        if mode == "chassis-velocity":
            dofs = part_dofs(model, spec.part)
            vx, vy, w = np.asarray(spec.twist_target, float)
            yaw = q[dofs[2]]
            c, s = np.cos(yaw), np.sin(yaw)
            v = np.clip(np.array([c * vx - s * vy, s * vx + c * vy, w]),
                        -model.vel_limit[dofs], model.vel_limit[dofs])
            J = np.zeros((3, model.nq))
            J[np.arange(3), dofs] = 1.0
            return J, v
        if mode == "look-at":
            cam = model.fk(q, "camera")
            axis = cam.rotation_matrix()[:, 2]  # optical +z
            d = np.asarray(spec.lookat_target, float) - cam.t
            nd = np.linalg.norm(d)
            if nd < 1e-9:
                return None, None
            d = d / nd
            w_des = _clamp_norm(cfg.kp_angular * np.cross(axis, d), cfg.max_angular_speed)
            Jang = model.jacobian(q, "camera")[3:]
            return Jang, w_des
        return None, None

    def _robot_shape_data(self, state: JointState):
        poses = self.model.shape_poses(state.position)
        return [(at.shape, p) for at, p in zip(self.model.shapes, poses)]

    def _point_jacobian(self, q, frame: str, point: np.ndarray) -> np.ndarray:
        J = self.model.jacobian(q, frame)
        origin = self.model.fk(q, frame).t
        return J[:3] - _skew(point - origin) @ J[3:]

    def _collision_rows(self, state: JointState, world: CollisionWorld, dt: float):
        cfg = self.config
        model = self.model
        q = state.position
        shape_data = self._robot_shape_data(state)
        entries = []  # (distance, row, bound)

        # self-collision pairs
        for i, j in model.self_collision_pairs:
            (sa, pa), (sb, pb) = shape_data[i], shape_data[j]
            d = shape_distance(sa, pa, sb, pb)
            if d >= cfg.collision_activation:
                continue
            ca, cb, n_ab, _ = shape_closest_points(sa, pa, sb, pb)
            Ja = self._point_jacobian(q, model.shapes[i].frame, ca)
            Jb = self._point_jacobian(q, model.shapes[j].frame, cb)
            # d/dt distance = n_ab . (v_b - v_a); require >= -k (d - margin)
            row = -(n_ab @ (Jb - Ja))
            entries.append((d, row, cfg.damper_gain * (d - cfg.collision_margin)))

        # robot vs world (and attached objects vs world)
        moving = list(shape_data)
        for att in world.attachments:
            att_pose = self.model.fk(q, att.frame)
            for s in att.shapes:
                moving.append((s, att_pose))
        frames = [at.frame for at in model.shapes] + [
            att.frame for att in world.attachments for _ in att.shapes
        ]
        for (sa, pa), frame in zip(moving, frames):
            for sw, pw in zip(world.shapes, world.shape_poses):
                d = shape_distance(sa, pa, sw, pw)
                if d >= cfg.collision_activation:
                    continue
                ca, cw, n_aw, _ = shape_closest_points(sa, pa, sw, pw)
                Ja = self._point_jacobian(q, frame, ca)
                row = n_aw @ Ja  # approach speed towards the obstacle
                entries.append((d, row, cfg.damper_gain * (d - cfg.collision_margin)))

        if not entries:
            return None
        entries.sort(key=lambda e: e[0])
        entries = entries[: cfg.max_collision_rows]
        A = np.vstack([e[1] for e in entries])
        ub = np.array([e[2] for e in entries])
        return A, ub

    def _gravity_rows(self, state: JointState, world: CollisionWorld):
        """Static gravity-load proxy: the model carries no mass matrix, so
        the torque constraint is approximated by bounding horizontal tool
        reach times an assumed payload."""
        cfg = self.config
        model = self.model
        if cfg.gravity_load_limit <= 0 or not model.has_frame("tool"):
            return None
        payload = 2.0 + sum(att.mass for att in world.attachments)
        r_max = cfg.gravity_load_limit / (9.81 * payload)
        q = state.position
        frames = model.fk_all(q)
        _, pb = frames["base_link"]
        tool = model.fk(q, "tool").t
        offset = (tool - pb)[:2]
        r = float(np.linalg.norm(offset))
        if r < r_max - 0.3:
            return None  # dormant away from the bound
        u = offset / max(r, 1e-9)
        Jrel = model.jacobian(q, "tool")[:2] - model.jacobian(q, "base_link")[:2]
        row = u @ Jrel
        return row[None, :], np.array([cfg.damper_gain * (r_max - r)])

    def _com_rows(self, state: JointState, dt: float):
        model, cfg = self.model, self.config
        if model.footprint is None or not model.masses:
            return None
        q = state.position
        frames = model.fk_all(q)
        Rb, pb = frames["base_link"]
        p_com = model.com(q)
        J_com = model.com_jacobian(q)
        Jb = model.jacobian(q, "base_link")
        rel = Rb.T @ (p_com - pb)
        J_rel = Rb.T @ (J_com - Jb[:3] + _skew(p_com - pb) @ Jb[3:])
        pts = model.footprint
        rows, ubs = [], []
        k = len(pts)
        for i in range(k):
            a, b = pts[i], pts[(i + 1) % k]
            e = b - a
            n2 = np.array([e[1], -e[0]])
            n2 /= np.linalg.norm(n2)
            # damper form: approach speed towards the support edge tapers
            # with the remaining slack, so braking starts early
            slack = float(n2 @ a) - cfg.com_margin - float(n2 @ rel[:2])
            rows.append(n2 @ J_rel[:2])
            ubs.append(cfg.damper_gain * slack)
        return np.vstack(rows), np.asarray(ubs)

    # -- tick ------------------------------------------------------------------

    def tick(self, state: JointState, cmd: WholeBodyCommand,
             world: CollisionWorld | None = None,
             forces: dict | None = None, dt: float = 0.005) -> TickResult:
        if cmd is not self._cmd:
            self.set_command(cmd)
        world = world or CollisionWorld.empty()
        forces = forces or {}

        # admittance target shifts (accumulate across ticks)
        for si, spec in enumerate(cmd.specs):
            if spec.mode == "task-admittance":
                wrench = np.asarray(forces.get(spec.part, np.zeros(6)), float)
                err = wrench - (np.asarray(spec.force_setpoint, float)
                                if spec.force_setpoint is not None else np.zeros(6))
                gain = np.asarray(spec.admittance_gain, float)
                delta = gain * err * dt
                delta = np.where(np.asarray(spec.axis_mask, bool), delta, 0.0)
                self._adm_offsets[si] = self._adm_offsets.get(si, np.zeros(6)) + delta
            elif spec.mode == "joint-admittance":
                dofs = part_dofs(self.model, spec.part)
                wrench = np.asarray(forces.get(spec.part, np.zeros(6)), float)
                setp = (np.asarray(spec.force_setpoint, float)
                        if spec.force_setpoint is not None else np.zeros(6))
                scalar = float(np.linalg.norm(wrench[:3]) - np.linalg.norm(setp[:3]))
                gain = np.atleast_1d(np.asarray(spec.admittance_gain, float))
                delta = np.full(len(dofs), gain[0] * scalar * dt)
                self._adm_offsets[si] = self._adm_offsets.get(si, np.zeros(len(dofs))) + delta

        errors = self._tracking_errors(state, cmd)
        pre_fault = self._safety_check(state, np.zeros(self.model.nq), dt)
        if pre_fault is not None:  # state already violating: rest, report
            self._prev_dq = np.zeros(self.model.nq)
            self._warm = None
            return TickResult(np.zeros(self.model.nq), errors, pre_fault)

        problem = self.assemble_qp(state, cmd, world, dt)
        sol = self.solver.solve(problem, warm_start=self._warm)
        if not sol.ok:
            # emergency stop: retry with the acceleration box dropped so
            # safety rows stay satisfiable
            problem = self.assemble_qp(state, cmd, world, dt,
                                       relax_acceleration=True)
            sol = self.solver.solve(problem)
        if not sol.ok:
            self._prev_dq = np.zeros(self.model.nq)
            self._warm = None
            return TickResult(np.zeros(self.model.nq), errors,
                              Fault("solver-failure", sol.status))
        dq = sol.x
        fault = self._safety_check(state, dq, dt)
        if fault is not None:
            self._prev_dq = np.zeros(self.model.nq)
            self._warm = None
            return TickResult(np.zeros(self.model.nq), errors, fault)
        self._prev_dq = dq
        self._warm = dq
        return TickResult(dq, errors, None)

    def _tracking_errors(self, state: JointState, cmd: WholeBodyCommand) -> dict:
        out = {}
        q = state.position
        for si, spec in enumerate(cmd.specs):
            e = np.zeros(6)
            if spec.mode in ("task-pose", "task-admittance"):
                target = spec.pose_target
                off = self._adm_offsets.get(si)
                if off is not None:
                    target = Pose.exp(off).compose(target)
                lin, ang = _pose_error(self.model.fk(q, spec.frame), target)
                e = np.concatenate([lin, ang])
            elif spec.mode == "look-at":
                cam = self.model.fk(q, "camera")
                axis = cam.rotation_matrix()[:, 2]
                d = np.asarray(spec.lookat_target, float) - cam.t
                nd = np.linalg.norm(d)
                if nd > 1e-9:
                    e[3:] = np.cross(axis, d / nd)
            elif spec.mode in ("joint-position", "joint-admittance"):
                dofs = part_dofs(self.model, spec.part)
                err = np.asarray(spec.joint_target, float) - q[dofs]
                off = self._adm_offsets.get(si)
                if off is not None:
                    err = err + off
                e[: min(6, len(err))] = err[:6]
            elif spec.mode == "chassis-position":
                dofs = part_dofs(self.model, spec.part)
                e[0] = spec.pose_target.t[0] - q[dofs[0]]
                e[1] = spec.pose_target.t[1] - q[dofs[1]]
                e[5] = _wrap(spec.pose_target.rotvec()[2] - q[dofs[2]])
            out[si] = e
        return out

    def _safety_check(self, state: JointState, dq: np.ndarray, dt: float) -> Fault | None:
        model, cfg = self.model, self.config
        q_next = state.position + dq * dt
        over = (q_next > model.pos_upper + 1e-6) | (q_next < model.pos_lower - 1e-6)
        if over.any():
            return Fault("joint-limit", f"joint index {int(np.nonzero(over)[0][0])}")
        poses = model.shape_poses(q_next)
        for i, j in model.self_collision_pairs:
            d = shape_distance(model.shapes[i].shape, poses[i],
                               model.shapes[j].shape, poses[j])
            if d < 0:
                return Fault(
                    "self-collision",
                    f"{model.shapes[i].name} vs {model.shapes[j].name} (d={d:.4f})",
                )
        if model.footprint is not None and model.masses:
            frames = model.fk_all(q_next)
            Rb, pb = frames["base_link"]
            rel = (Rb.T @ (model.com(q_next) - pb))[:2]
            pts = model.footprint
            for i in range(len(pts)):
                a, b = pts[i], pts[(i + 1) % len(pts)]
                e = b - a
                n2 = np.array([e[1], -e[0]])
                n2 /= np.linalg.norm(n2)
                if n2 @ rel > n2 @ a - cfg.com_margin + 1e-9:
                    return Fault("com-violation",
                                 f"planar CoM {rel.round(3)} outside support polygon")
        return None


def _wrap(a: float) -> float:
    return (a + np.pi) % (2 * np.pi) - np.pi
