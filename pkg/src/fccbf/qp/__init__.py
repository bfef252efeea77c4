"""Small dense QP solver used by the per-step safety filter."""
from ._backend import BACKEND, available_backends
from .solver import (
    RELAX_GOAL_FIRST,
    RELAX_POLICIES,
    RELAX_UNIFORM,
    SLACK_PENALTY,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_RELAXED,
    STATUSES,
    QpProblem,
    QpSolution,
    QpSolver,
    kkt_check,
    solve,
    solve_relaxed,
)

__all__ = [
    "BACKEND",
    "RELAX_GOAL_FIRST",
    "RELAX_POLICIES",
    "RELAX_UNIFORM",
    "SLACK_PENALTY",
    "STATUSES",
    "STATUS_INFEASIBLE",
    "STATUS_OPTIMAL",
    "STATUS_RELAXED",
    "QpProblem",
    "QpSolution",
    "QpSolver",
    "available_backends",
    "kkt_check",
    "solve",
    "solve_relaxed",
]
