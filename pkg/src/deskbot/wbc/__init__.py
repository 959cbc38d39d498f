"""Whole-body hybrid task-space control."""

from .config import WbcConfig
from .controller import WholeBodyController
from .specs import (
    CommandError,
    ControllerSpec,
    Fault,
    MODES,
    TickResult,
    WholeBodyCommand,
    part_dofs,
    validate_command,
)

__all__ = [
    "CommandError",
    "ControllerSpec",
    "Fault",
    "MODES",
    "TickResult",
    "WbcConfig",
    "WholeBodyCommand",
    "WholeBodyController",
    "part_dofs",
    "validate_command",
]
