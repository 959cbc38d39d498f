"""Joint-space state snapshot."""

from __future__ import annotations

import numpy as np


class JointState:
    """Immutable (position, velocity, time) snapshot of all joints."""

    __slots__ = ("position", "velocity", "time")

    def __init__(self, position, velocity=None, time: float = 0.0):
        p = np.asarray(position, dtype=float).copy()
        v = np.zeros_like(p) if velocity is None else np.asarray(velocity, dtype=float).copy()
        if p.shape != v.shape:
            raise ValueError("position/velocity length mismatch")
        p.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "time", float(time))

    def __setattr__(self, name, value):
        raise AttributeError("JointState is immutable")

    @property
    def ndof(self) -> int:
        return len(self.position)

    def advanced(self, dq: np.ndarray, dt: float) -> "JointState":
        """Integrate one tick of joint velocities."""
        dq = np.asarray(dq, dtype=float)
        return JointState(self.position + dq * dt, dq, self.time + dt)

    def __repr__(self) -> str:
        return f"JointState(ndof={self.ndof}, t={self.time:.3f})"
