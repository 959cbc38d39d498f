"""Dense convex quadratic programming."""

from .core import (
    STATUS_MAX_ITERATIONS,
    STATUS_OPTIMAL,
    STATUS_PRIMAL_INFEASIBLE,
    INF,
    QpDimensionError,
    QpProblem,
    QpSolution,
    QpSolver,
    warmup,
)

__all__ = [
    "INF",
    "QpDimensionError",
    "QpProblem",
    "QpSolution",
    "QpSolver",
    "STATUS_MAX_ITERATIONS",
    "STATUS_OPTIMAL",
    "STATUS_PRIMAL_INFEASIBLE",
    "warmup",
]
