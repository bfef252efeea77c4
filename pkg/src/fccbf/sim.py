"""Zero-order-hold closed loop: solve the QP at each sample, hold the control, integrate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .barriers import (
    ClbfSpec,
    FccbfSpec,
    HocbfSpec,
    LinearControlConstraint,
    build_clbf,
    build_fccbf,
    build_hocbf,
)
from .errors import ConfigurationError, SimulationError
from .model import ControlBounds, SystemModel, as_state
from .qp import (
    RELAX_GOAL_FIRST,
    RELAX_POLICIES,
    RELAX_UNIFORM,
    STATUS_INFEASIBLE,
    STATUS_RELAXED,
    QpProblem,
    QpSolution,
    QpSolver,
)

GOAL_TAG = "h"

EVENT_GOAL = "goal-reached"
EVENT_UNSAFE = "safety-violated"
EVENT_RELAXED = "qp-relaxed"
EVENT_INFEASIBLE = "qp-infeasible-hard"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    horizon: float = 6.0
    substeps: int = 1
    constraint_tol: float = 1e-6
    event_tol: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ConfigurationError(f"horizon {self.horizon} shorter than dt {self.dt}")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class ControllerSpec:
    """Goal formulation (FCCBF or CLBF), safety barriers and the QP cost ``u'Hu``.

    ``goal`` may be omitted for a pure safety filter (the HOCBF desk check).
    ``relaxation`` is ``"uniform"`` (goal and safety rows softened together
    with equal penalty) or ``"goal-first"`` (soften the goal row alone first,
    safety rows only if that is still infeasible).
    """

    goal: FccbfSpec | ClbfSpec | None
    safety: tuple[HocbfSpec, ...] = ()
    hessian: np.ndarray | None = None
    relax_goal: bool = True
    relax_safety: bool = True
    relaxation: str = RELAX_UNIFORM

    def __post_init__(self):
        if self.relaxation not in RELAX_POLICIES:
            raise ConfigurationError(f"relaxation must be one of {RELAX_POLICIES}, got {self.relaxation!r}")
        if self.goal is not None and not isinstance(self.goal, (FccbfSpec, ClbfSpec)):
            raise ConfigurationError("goal must be a single FCCBF or CLBF formulation")
        object.__setattr__(self, "safety", tuple(self.safety))
        tags = [s.constraint.name for s in self.safety]
        if self.goal is not None:
            if self.goal_tag != GOAL_TAG:
                raise ConfigurationError(f"goal constraint must be named {GOAL_TAG!r}, got {self.goal_tag!r}")
            tags.append(self.goal_tag)
        if len(set(tags)) != len(tags) or "V" in tags:
            raise ConfigurationError(f"constraint names must be unique and not 'V', got {tags}")

    @property
    def goal_tag(self) -> str:
        return self.goal.constraint.name if self.goal is not None else ""

    @property
    def kind(self) -> str:
        if self.goal is None:
            return "safety-only"
        return "fccbf" if isinstance(self.goal, FccbfSpec) else "clbf"

    @property
    def r(self) -> float:
        return self.goal.r if isinstance(self.goal, FccbfSpec) else 0.0

    def relax_tags(self) -> frozenset[str]:
        tags = set()
        if self.relax_goal and self.goal is not None:
            tags.add(self.goal_tag)
        if self.relax_safety:
            tags.update(s.constraint.name for s in self.safety)
        return frozenset(tags)

    def rows(self, sys: SystemModel, x: np.ndarray) -> list[LinearControlConstraint]:
        rows = []
        if isinstance(self.goal, FccbfSpec):
            rows.append(build_fccbf(self.goal, sys, x))
        elif isinstance(self.goal, ClbfSpec):
            rows.append(build_clbf(self.goal, sys, x))
        rows.extend(build_hocbf(s, sys, x) for s in self.safety)
        return rows

    def problem(self, sys: SystemModel, bounds: ControlBounds, x: np.ndarray) -> QpProblem:
        H = np.eye(sys.control_dim) if self.hessian is None else self.hessian
        first = frozenset([self.goal_tag]) if self.relaxation == RELAX_GOAL_FIRST and self.goal is not None else frozenset()
        return QpProblem(H, tuple(self.rows(sys, x)), bounds, self.relax_tags(), first)


@dataclass
class TrajectoryLog:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    constraint_values: dict[str, np.ndarray]
    qp_statuses: list[str]
    slack_totals: np.ndarray
    events: list[dict] = field(default_factory=list)
    terminal: QpSolution | None = None
    meta: dict = field(default_factory=dict)

    def first_event(self, kind: str) -> dict | None:
        return next((e for e in self.events if e["type"] == kind), None)

    def has_event(self, kind: str) -> bool:
        return self.first_event(kind) is not None

    def safety_tags(self) -> list[str]:
        return [t for t in self.constraint_values if t not in (GOAL_TAG, "V")]


def step(
    ctrl: ControllerSpec,
    sys: SystemModel,
    bounds: ControlBounds,
    x,
    solver: QpSolver | None = None,
) -> tuple[np.ndarray, QpSolution]:
    x = as_state(x, sys.state_dim)
    solver = solver or QpSolver()
    sol = solver.solve(ctrl.problem(sys, bounds, x))
    return sol.u, sol


def integrate(sys: SystemModel, x, u, dt: float, substeps: int = 1) -> np.ndarray:
    """Classical RK4 under a held control."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        k1 = sys.xdot(x, u)
        k2 = sys.xdot(x + 0.5 * h * k1, u)
        k3 = sys.xdot(x + 0.5 * h * k2, u)
        k4 = sys.xdot(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)):
        raise SimulationError(f"non-finite state {x} after integrating u={u} over dt={dt}")
    return x


def _crossing(times: np.ndarray, values: np.ndarray, level: float, above: bool, resolution: float) -> float | None:
    """First time ``values`` reaches ``level`` (from below if ``above``), linearly interpolated."""
    hit = values >= level if above else values < level
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return 0.0
    v0, v1 = values[i - 1], values[i]
    frac = (level - v0) / (v1 - v0) if v1 != v0 else 1.0
    t = times[i - 1] + frac * (times[i] - times[i - 1])
    return round(t / resolution) * resolution


def detect_events(log: TrajectoryLog, config: SimConfig) -> list[dict]:
    events = []
    if GOAL_TAG in log.constraint_values:
        t_goal = _crossing(log.times, log.constraint_values[GOAL_TAG], 0.0, True, config.event_tol)
        if t_goal is not None:
            events.append({"type": EVENT_GOAL, "time": t_goal, "tag": GOAL_TAG})
    for tag in log.safety_tags():
        t_bad = _crossing(log.times, log.constraint_values[tag], -config.constraint_tol, False, config.event_tol)
        if t_bad is not None:
            events.append({"type": EVENT_UNSAFE, "time": t_bad, "tag": tag})
    prev = None
    for i, status in enumerate(log.qp_statuses):
        if status != prev and status in (STATUS_RELAXED, STATUS_INFEASIBLE):
            kind = EVENT_RELAXED if status == STATUS_RELAXED else EVENT_INFEASIBLE
            events.append({"type": kind, "time": float(log.times[i]), "tag": ""})
        prev = status
    events.sort(key=lambda e: (e["time"], e["type"], e["tag"]))
    return events


def run(
    ctrl: ControllerSpec,
    sys: SystemModel,
    bounds: ControlBounds,
    x0,
    config: SimConfig = SimConfig(),
    solver: QpSolver | None = None,
) -> TrajectoryLog:
    x = as_state(x0, sys.state_dim)
    goal = ctrl.goal.constraint if ctrl.goal is not None else None
    if isinstance(ctrl.goal, FccbfSpec):
        ctrl.goal.validate_start(x)
    elif goal is not None and not goal(x) < 0:
        raise ConfigurationError(f"goal constraint already satisfied at x0 (h = {goal(x):.6g})")

    solver = solver or QpSolver()
    n = config.n_steps
    times = config.dt * np.arange(n + 1)
    states = np.empty((n + 1, sys.state_dim))
    controls = np.empty((n, sys.control_dim))
    statuses: list[str] = []
    slacks = np.zeros(n)
    tags = ([GOAL_TAG, "V"] if goal is not None else []) + [s.constraint.name for s in ctrl.safety]
    values = {t: np.empty(n + 1) for t in tags}
    safety_fns = [(s.constraint.name, s.constraint) for s in ctrl.safety]
    r = ctrl.r

    def record(i: int, state: np.ndarray) -> None:
        states[i] = state
        if goal is not None:
            hv = goal(state)
            values[GOAL_TAG][i] = hv
            values["V"][i] = r - hv
        for name, fn in safety_fns:
            values[name][i] = fn(state)

    record(0, x)
    for i in range(n):
        u, sol = step(ctrl, sys, bounds, x, solver)
        controls[i] = u
        statuses.append(sol.status)
        slacks[i] = sol.slack_total
        x = integrate(sys, x, u, config.dt, config.substeps)
        record(i + 1, x)
    _, terminal = step(ctrl, sys, bounds, x, solver)

    log = TrajectoryLog(
        times=times,
        states=states,
        controls=controls,
        constraint_values=values,
        qp_statuses=statuses,
        slack_totals=slacks,
        terminal=terminal,
        meta={"controller": ctrl.kind, "r": r, "k": getattr(ctrl.goal, "k", math.nan)},
    )
    log.events = detect_events(log, config)
    return log


def envelope_excess(log: TrajectoryLog, rel_tol: float = 1e-3, abs_tol: float = 0.0) -> np.ndarray:
    """Per-sample ``V(t) - V(0) exp(-k t) (1 + rel_tol) - abs_tol``; positive entries break the envelope.

    Only meaningful for FCCBF logs. ``abs_tol`` covers the rounding floor of
    ``r - h(x)`` once the envelope itself decays below machine precision.
    """
    if log.meta.get("controller") != "fccbf":
        raise ConfigurationError("the exponential envelope applies to FCCBF runs only")
    V = log.constraint_values["V"]
    k = float(log.meta["k"])
    return V - V[0] * np.exp(-k * log.times) * (1.0 + rel_tol) - abs_tol
