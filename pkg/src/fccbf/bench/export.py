"""Write run artifacts (per-run CSV, summary JSON, plot companions) and re-check them."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import FccbfError
from ..qp import STATUSES
from ..sim import GOAL_TAG, TrajectoryLog
from .runner import BOUND_TOL, RunSummary, run_passes, verdict

FLOAT_FMT = "%.12g"
SUMMARY_FILE = "summary.json"
TRAJECTORY_PLOT = "plotdata_trajectories.csv"
CONSTRAINT_PLOT = "plotdata_constraints.csv"


class ExportError(FccbfError, OSError):
    pass


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_header(log: TrajectoryLog) -> list[str]:
    n = log.states.shape[1]
    q = log.controls.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(q)]
    if GOAL_TAG in log.constraint_values:
        cols += [GOAL_TAG, "V"]
    return cols + log.safety_tags() + ["qp_status", "slack_total"]


def run_rows(log: TrajectoryLog) -> list[list[str]]:
    """One row per logged time. The last row carries the QP solved at the final state (not applied)."""
    controls = list(log.controls)
    statuses = list(log.qp_statuses)
    slacks = list(log.slack_totals)
    if log.terminal is not None:
        controls.append(log.terminal.u)
        statuses.append(log.terminal.status)
        slacks.append(log.terminal.slack_total)
    value_tags = ([GOAL_TAG, "V"] if GOAL_TAG in log.constraint_values else []) + log.safety_tags()
    rows = []
    for i, t in enumerate(log.times):
        row = [_fmt(t)] + [_fmt(v) for v in log.states[i]] + [_fmt(v) for v in controls[i]]
        row += [_fmt(log.constraint_values[tag][i]) for tag in value_tags]
        row += [statuses[i], _fmt(slacks[i])]
        rows.append(row)
    return rows


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def export(logs: list[TrajectoryLog | None], summary: RunSummary, out_dir) -> list[Path]:
    """Write ``run_<idx>.csv`` per successful run, ``summary.json`` and the plot companions."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {out}: {exc}") from exc
    written: list[Path] = []
    traj_rows, cons_rows = [], []
    traj_header = cons_header = None
    for rec, log in zip(summary.runs, logs):
        if log is None:
            continue
        path = out / f"run_{rec.index}.csv"
        _write_csv(path, run_header(log), run_rows(log))
        written.append(path)

        n, q = log.states.shape[1], log.controls.shape[1]
        traj_header = ["run", "controller", "t"] + [f"x{i + 1}" for i in range(n)]
        cons_header = ["run", "controller", "t", "h", "b_min"] + [f"u{j + 1}" for j in range(q)]
        tags = log.safety_tags()
        b_min = np.min(np.vstack([log.constraint_values[t] for t in tags]), axis=0) if tags else None
        has_goal = GOAL_TAG in log.constraint_values
        for i, t in enumerate(log.times):
            traj_rows.append([str(rec.index), rec.controller, _fmt(t)] + [_fmt(v) for v in log.states[i]])
            u = log.controls[i] if i < len(log.controls) else (log.terminal.u if log.terminal is not None else log.controls[-1])
            cons_rows.append(
                [str(rec.index), rec.controller, _fmt(t),
                 _fmt(log.constraint_values[GOAL_TAG][i]) if has_goal else "",
                 _fmt(b_min[i]) if b_min is not None else ""]
                + [_fmt(v) for v in u]
            )
    if traj_header is not None:
        _write_csv(out / TRAJECTORY_PLOT, traj_header, traj_rows)
        _write_csv(out / CONSTRAINT_PLOT, cons_header, cons_rows)
        written += [out / TRAJECTORY_PLOT, out / CONSTRAINT_PLOT]

    payload = summary.to_dict()
    payload["version"] = __version__
    payload["files"] = sorted(p.name for p in written)
    path = out / SUMMARY_FILE
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(json_safe(payload), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    written.append(path)
    return written


def verify(out_dir) -> list[str]:
    """Re-check an output directory against its own summary; returns a list of problems (empty if clean)."""
    out = Path(out_dir)
    problems: list[str] = []
    try:
        with open(out / SUMMARY_FILE, encoding="utf-8") as fh:
            summary = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return [f"{out / SUMMARY_FILE}: {exc}"]

    lo = np.array(summary["bounds"]["u_min"], dtype=float)
    hi = np.array(summary["bounds"]["u_max"], dtype=float)
    expected_rows = summary["n_steps"] + 1
    for rec in summary["runs"]:
        if bool(rec.get("passed")) != run_passes(rec):
            problems.append(f"run {rec['index']}: stored pass flag disagrees with its fields")
        if rec.get("error"):
            continue
        path = out / f"run_{rec['index']}.csv"
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            problems.append(f"{path}: {exc}")
            continue
        header, body = rows[0], rows[1:]
        if len(body) != expected_rows:
            problems.append(f"{path}: {len(body)} rows, expected {expected_rows}")
        if header[0] != "t" or header[-2:] != ["qp_status", "slack_total"]:
            problems.append(f"{path}: unexpected header {header}")
            continue
        bad = sorted({r[-2] for r in body} - set(STATUSES))
        if bad:
            problems.append(f"{path}: unknown qp_status values {bad}")
        u_cols = [i for i, c in enumerate(header) if c.startswith("u") and c[1:].isdigit()]
        b_cols = [i for i, c in enumerate(header) if c.startswith("b_")]
        data = np.array([[float(r[i]) for i in u_cols + b_cols] for r in body])
        u = data[:, : len(u_cols)]
        viol = max(0.0, float(np.max(lo - u, initial=0.0)), float(np.max(u - hi, initial=0.0)))
        if viol > BOUND_TOL:
            problems.append(f"{path}: control outside bounds by {viol:.3g}")
        times = np.array([float(r[0]) for r in body])
        if np.any(np.diff(times) <= 0):
            problems.append(f"{path}: time column not increasing")
        if b_cols and rec.get("min_b") is not None:
            b_min = float(np.min(data[:, len(u_cols):]))
            if abs(b_min - rec["min_b"]) > 1e-10 * (1.0 + abs(rec["min_b"])):
                problems.append(f"{path}: min b {b_min!r} disagrees with summary {rec['min_b']!r}")
    stored = summary.get("verdict")
    if stored != ("pass" if verdict(summary["runs"]) else "fail"):
        problems.append(f"{SUMMARY_FILE}: stored verdict {stored!r} disagrees with the run fields")
    return problems
