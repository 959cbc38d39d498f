"""Part-controller specifications and command validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geomkin import Pose, RobotModel

MODES = (
    "joint-position",
    "joint-velocity",
    "joint-admittance",
    "look-at",
    "chassis-position",
    "chassis-velocity",
    "task-pose",
    "task-velocity",
    "task-admittance",
)

_JOINT_MODES = {"joint-position", "joint-velocity", "joint-admittance"}
_TASK_MODES = {"task-pose", "task-velocity", "task-admittance"}


class CommandError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerSpec:
    """One part controller.  `part` may be a composite like "arm+torso"."""

    part: str
    mode: str
    joint_target: np.ndarray | None = None  # joint modes
    pose_target: Pose | None = None  # task-pose / task-admittance / chassis-position
    twist_target: np.ndarray | None = None  # task-velocity (6,) / chassis-velocity (3,)
    lookat_target: np.ndarray | None = None  # look-at (3,)
    frame: str = "tool"  # controlled frame for task modes
    admittance_gain: np.ndarray | None = None  # (6,) m/s per N, rad/s per N*m
    force_setpoint: np.ndarray | None = None  # (6,) N / N*m
    axis_mask: tuple = (True,) * 6  # admittance-enabled Cartesian axes
    weight: float = 1.0

    def base_parts(self) -> list[str]:
        return self.part.split("+")

    def describe(self) -> str:
        return f"{self.part}:{self.mode}"


@dataclass(frozen=True)
class WholeBodyCommand:
    specs: tuple

    def __init__(self, specs):
        object.__setattr__(self, "specs", tuple(specs))


@dataclass(frozen=True)
class Fault:
    kind: str  # self-collision | com-violation | joint-limit | solver-failure
    detail: str


@dataclass(frozen=True)
class TickResult:
    command: np.ndarray  # joint velocities for the tick
    tracking_errors: dict  # spec index -> 6-vector (lin m, ang rad)
    fault: Fault | None = None

    @property
    def ok(self) -> bool:
        return self.fault is None


def part_dofs(model: RobotModel, part: str) -> np.ndarray:
    """Dof indices of a (possibly composite) part name."""
    idx: list[int] = []
    for p in part.split("+"):
        if p not in model.parts:
            raise CommandError(f"unknown part {p!r}")
        idx.extend(model.part_dof_indices(p).tolist())
    return np.asarray(sorted(set(idx)), dtype=int)


def validate_command(cmd: WholeBodyCommand, model: RobotModel) -> None:
    """Raises CommandError on part overlap or mode/target mismatch."""
    claimed: dict[int, str] = {}
    for spec in cmd.specs:
        if spec.mode not in MODES:
            raise CommandError(f"unknown mode {spec.mode!r} for part {spec.part!r}")
        dofs = part_dofs(model, spec.part)
        for d in dofs:
            if d in claimed:
                raise CommandError(
                    f"controlled parts overlap: {claimed[d]} and {spec.describe()} "
                    f"share joint index {d}"
                )
            claimed[d] = spec.describe()
        _check_target(spec, model, len(dofs))


def _check_target(spec: ControllerSpec, model: RobotModel, ndofs: int) -> None:
    m = spec.mode
    if m in _JOINT_MODES:
        if spec.joint_target is None or len(np.atleast_1d(spec.joint_target)) != ndofs:
            raise CommandError(f"{spec.describe()}: joint target of length {ndofs} required")
        if m == "joint-admittance" and spec.admittance_gain is None:
            raise CommandError(f"{spec.describe()}: admittance gain required")
    elif m in ("task-pose", "task-admittance"):
        if spec.pose_target is None:
            raise CommandError(f"{spec.describe()}: pose target required")
        if not model.has_frame(spec.frame):
            raise CommandError(f"{spec.describe()}: unknown frame {spec.frame!r}")
        if m == "task-admittance" and spec.admittance_gain is None:
            raise CommandError(f"{spec.describe()}: admittance gain required")
    elif m == "task-velocity":
        if spec.twist_target is None or len(spec.twist_target) != 6:
            raise CommandError(f"{spec.describe()}: 6-vector twist target required")
        if not model.has_frame(spec.frame):
            raise CommandError(f"{spec.describe()}: unknown frame {spec.frame!r}")
    elif m == "chassis-position":
        if spec.pose_target is None:
            raise CommandError(f"{spec.describe()}: pose target required")
    elif m == "chassis-velocity":
        if spec.twist_target is None or len(spec.twist_target) != 3:
            raise CommandError(f"{spec.describe()}: (vx, vy, wz) target required")
    elif m == "look-at":
        if spec.lookat_target is None or len(spec.lookat_target) != 3:
            raise CommandError(f"{spec.describe()}: 3-D look-at point required")
