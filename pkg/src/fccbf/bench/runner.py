"""Batch execution of a scenario and the per-run summary it produces."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..design import (
    MODE_SAMPLED,
    FeasibilityReport,
    check_validity_initial,
    check_validity_sampled,
    reachable_set,
)
from ..errors import FccbfError
from ..qp import STATUS_INFEASIBLE, STATUS_RELAXED, QpSolver
from ..sim import GOAL_TAG, TrajectoryLog, run
from .scenario import Scenario, parse_scenario

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-9
SAFETY_TOL = 1e-6


@dataclass
class RunRecord:
    index: int
    init_index: int
    controller: str
    kind: str
    baseline: bool
    x0: list[float]
    params: dict
    goal_reached_time: float | None = None
    h_at_tf: float | None = None
    min_b: float | None = None
    min_b_tag: str | None = None
    first_violation_time: float | None = None
    control_bound_max_violation: float | None = None
    qp_relaxed_count: int = 0
    qp_infeasible_count: int = 0
    qp_iterations: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_passes(rec: dict) -> bool:
    """Verdict for one run from its summary fields alone."""
    if rec.get("error"):
        return False
    if rec["control_bound_max_violation"] is None or rec["control_bound_max_violation"] > BOUND_TOL:
        return False
    if rec["min_b"] is not None and rec["min_b"] < -SAFETY_TOL:
        return False
    if rec["kind"] in ("fccbf", "clbf") and not (rec["h_at_tf"] is not None and rec["h_at_tf"] >= 0):
        return False
    return True


def verdict(runs: list[dict]) -> bool:
    """Every non-baseline run passes. Baseline runs are reported, not judged."""
    return all(run_passes(r) for r in runs if not r["baseline"])


@dataclass
class RunSummary:
    scenario: str
    relaxation: str
    t_f: float
    dt: float
    n_steps: int
    bounds: dict
    runs: list[RunRecord] = field(default_factory=list)
    design: list[dict] = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return verdict([r.to_dict() for r in self.runs])

    def to_dict(self) -> dict:
        runs = [r.to_dict() for r in self.runs]
        for r in runs:
            r["passed"] = run_passes(r)
        return {
            "scenario": self.scenario,
            "relaxation": self.relaxation,
            "t_f": self.t_f,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "bounds": self.bounds,
            "thresholds": {"bound_tol": BOUND_TOL, "safety_tol": SAFETY_TOL},
            "runs": runs,
            "design": self.design,
            "verdict": "pass" if verdict(runs) else "fail",
        }


def _design_report(sc: Scenario, resolved, x0: np.ndarray) -> dict:
    spec = resolved.spec.goal
    if sc.design.mode == MODE_SAMPLED:
        lo, hi = sc.design.box
        reach = reachable_set(sc.goal, x0, box=(lo, hi))
        report: FeasibilityReport = check_validity_sampled(
            spec, sc.system, sc.bounds, reach, sc.design.n_samples, sc.design.seed
        )
    else:
        report = check_validity_initial(spec, sc.system, sc.bounds, x0)
    report.k_interval = resolved.k_interval
    return report.to_dict()


def design_checks(sc: Scenario) -> list[dict]:
    """Bound-compatibility report for every (start, FCCBF controller) pair."""
    out = []
    for i, x0 in enumerate(sc.initial_states):
        for c, cfg in enumerate(sc.controllers):
            if cfg.type != "fccbf":
                continue
            entry = {"init_index": i, "controller": cfg.label}
            try:
                entry.update(_design_report(sc, sc.resolve(c, x0), x0))
            except FccbfError as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
            out.append(entry)
    return out


def _record(sc: Scenario, idx: int, i: int, c: int, log: TrajectoryLog | None, resolved, error) -> RunRecord:
    x0 = sc.initial_states[i]
    cfg = sc.controllers[c]
    rec = RunRecord(
        index=idx,
        init_index=i,
        controller=cfg.label,
        kind=cfg.type,
        baseline=cfg.baseline,
        x0=[float(v) for v in x0],
        params=dict(resolved.params) if resolved is not None else {},
        error=error,
    )
    if log is None:
        return rec
    ev = log.first_event("goal-reached")
    rec.goal_reached_time = None if ev is None else float(ev["time"])
    if GOAL_TAG in log.constraint_values:
        i_tf = min(int(round(sc.t_f / sc.sim.dt)), len(log.times) - 1)
        rec.h_at_tf = float(log.constraint_values[GOAL_TAG][i_tf])
    tags = log.safety_tags()
    if tags:
        mins = {t: float(np.min(log.constraint_values[t])) for t in tags}
        rec.min_b_tag = min(mins, key=lambda t: (mins[t], t))
        rec.min_b = mins[rec.min_b_tag]
    ev = log.first_event("safety-violated")
    rec.first_violation_time = None if ev is None else float(ev["time"])
    rec.control_bound_max_violation = max((sc.bounds.violation(u) for u in log.controls), default=0.0)
    rec.qp_relaxed_count = sum(s == STATUS_RELAXED for s in log.qp_statuses)
    rec.qp_infeasible_count = sum(s == STATUS_INFEASIBLE for s in log.qp_statuses)
    rec.qp_iterations = int(log.meta.get("qp_iterations", 0))
    return rec


def execute_run(sc: Scenario, idx: int, i: int, c: int, backend: str | None = None) -> tuple[TrajectoryLog | None, RunRecord]:
    x0 = sc.initial_states[i]
    resolved = log = None
    error = None
    try:
        resolved = sc.resolve(c, x0)
        solver = QpSolver(backend)
        log = run(resolved.spec, sc.system, sc.bounds, x0, sc.sim, solver)
        log.meta["qp_iterations"] = solver.stats["iterations"]
        log.meta["controller_label"] = sc.controllers[c].label
    except (FccbfError, RuntimeError) as exc:
        logger.warning("run %d failed: %s", idx, exc)
        error = f"{type(exc).__name__}: {exc}"
        log = None
    return log, _record(sc, idx, i, c, log, resolved, error)


def _worker(args):
    raw, source, idx, i, c, backend = args
    return execute_run(parse_scenario(raw, source), idx, i, c, backend)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("FCCBF_WORKERS", "1")))
    except ValueError:
        return 1


def run_batch(
    sc: Scenario, workers: int | None = None, backend: str | None = None
) -> tuple[list[TrajectoryLog | None], RunSummary]:
    """Design checks once, then every (initial state, controller) pair.

    Results are in plan order whatever ``workers`` is.
    """
    workers = default_workers() if workers is None else max(1, workers)
    design = design_checks(sc)
    plan = sc.run_plan()
    if workers > 1 and len(plan) > 1:
        jobs = [(sc.raw, sc.source, idx, i, c, backend) for idx, i, c in plan]
        with ProcessPoolExecutor(max_workers=min(workers, len(plan))) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [execute_run(sc, idx, i, c, backend) for idx, i, c in plan]
    summary = RunSummary(
        scenario=sc.name,
        relaxation=sc.relaxation,
        t_f=sc.t_f,
        dt=sc.sim.dt,
        n_steps=sc.sim.n_steps,
        bounds={"u_min": sc.bounds.u_min.tolist(), "u_max": sc.bounds.u_max.tolist()},
        runs=[rec for _, rec in results],
        design=design,
    )
    return [log for log, _ in results], summary
