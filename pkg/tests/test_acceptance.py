"""The eight acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line; the lines are printed
at the end of the pytest run (see conftest.py) and by running this file
directly with ``python3 tests/test_acceptance.py``.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from fccbf.barriers import FccbfSpec, HocbfSpec, LinearControlConstraint, build_hocbf
from fccbf.bench import load_scenario, run_batch
from fccbf.design import check_validity_initial, check_validity_sampled, feasible_k_interval, reachable_set
from fccbf.model import ControlBounds, double_integrator_1d, goal_disk, position_floor, single_integrator_2d
from fccbf.qp import STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_RELAXED, QpProblem, kkt_check, solve
from fccbf.sim import EVENT_UNSAFE, ControllerSpec, envelope_excess, run

sys.path.insert(0, str(Path(__file__).parent))
from oracles import box_rows, disk_goal_k_interval, hocbf_floor_row, qp_enumerate  # noqa: E402

RESULTS: dict[int, str] = {}

SI = single_integrator_2d()
U2 = ControlBounds.symmetric(2.0, 2)
H = goal_disk((0.0, 0.0), 1.0, "h")

# V = r - h(x) is computed in float64; once the envelope decays below this
# absolute level the comparison only sees rounding (reported, never used to pass)
ROUNDING_FLOOR = 1e-12


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)


_case_cache: dict = {}


def case_study():
    if "batch" not in _case_cache:
        sc = load_scenario("case_study_4obs")
        t0 = time.perf_counter()
        logs, summary = run_batch(sc, workers=1)
        _case_cache["batch"] = (sc, logs, summary, time.perf_counter() - t0)
    return _case_cache["batch"]


def test_criterion_1_case_study_convergence():
    sc, _, summary, elapsed = case_study()
    runs = summary.runs
    bad = [
        r.index for r in runs
        if r.error or r.h_at_tf is None or r.h_at_tf < 0 or r.min_b < -1e-6 or r.control_bound_max_violation > 1e-9
    ]
    ok = len(runs) == 10 and not bad
    detail = (
        f"{len(runs)} runs, min h(6)={min(r.h_at_tf for r in runs):.4g}, "
        f"min b={min(r.min_b for r in runs):.3g}, "
        f"max bound excess={max(r.control_bound_max_violation for r in runs):.3g}, "
        f"failing runs={bad}, runtime {elapsed:.2f}s (target < 5s, not gated)"
    )
    record(1, ok, detail)
    assert ok, detail


def test_criterion_2_exponential_envelope():
    _, logs, summary, _ = case_study()
    broken, enforced_broken, rounding_only = [], [], []
    for log, rec in zip(logs, summary.runs):
        excess = envelope_excess(log, rel_tol=1e-3)
        if np.max(excess) <= 0:
            continue
        broken.append(rec.index)
        if STATUS_RELAXED not in log.qp_statuses:
            enforced_broken.append(rec.index)
            if np.max(excess) <= ROUNDING_FLOOR:
                rounding_only.append(rec.index)
    worst = max((float(np.max(envelope_excess(log))) for log in logs), default=-math.inf)
    ok = not broken
    detail = (
        f"{len(broken)}/{len(logs)} FCCBF runs exceed V(0)e^(-kt)(1+1e-3) (runs {broken}, worst excess {worst:.3g}); "
        f"runs exceeding with every goal row enforced: {enforced_broken}"
        + (f" of which within the {ROUNDING_FLOOR:g} rounding floor: {rounding_only}" if enforced_broken else "")
        + ("; exceeding runs softened the goal row to keep clear of an obstacle" if broken else "")
    )
    record(2, ok, detail)
    assert ok, detail


def test_criterion_3_k_interval_numerics():
    x0 = np.array([-3.0, -3.0])
    iv = feasible_k_interval(H, 1.0, 6.0, SI, U2, x0)
    want_lo, want_hi = math.log(18.0) / 6.0, 4.0 / 3.0
    oracle_lo, oracle_hi = disk_goal_k_interval((0, 0), 1.0, 1.0, 6.0, x0, (2.0, 2.0))
    interval_ok = (
        abs(iv.k_min - want_lo) <= 1e-9 and abs(iv.k_max - want_hi) <= 1e-9
        and abs(oracle_lo - want_lo) <= 1e-12 and abs(oracle_hi - want_hi) <= 1e-12
    )
    log = run(ControllerSpec(FccbfSpec(H, 1.0, iv.k_min, 6.0)), SI, U2, x0)
    h6 = float(log.constraint_values["h"][600])
    sim_ok = h6 >= -1e-3 * abs(H(x0))
    design = check_validity_initial(FccbfSpec(H, 1.0, 1.01 * iv.k_max, 6.0), SI, U2, x0)
    ok = interval_ok and sim_ok and not design.pointwise_pass
    detail = (
        f"interval [{iv.k_min:.9f}, {iv.k_max:.9f}] vs [{want_lo:.9f}, {want_hi:.9f}]; "
        f"h(6) at k_min = {h6:.4g} (need >= {-1e-3 * abs(H(x0)):.3g}); "
        f"pointwise at 1.01 k_max: {'fails' if not design.pointwise_pass else 'passes'} (margin {design.margin:.3g})"
    )
    record(3, ok, detail)
    assert ok, detail


def test_criterion_4_clbf_comparison():
    logs, summary = run_batch(load_scenario("clbf_compare_1obs"), workers=1)
    by_kind = {rec.kind: (log, rec) for log, rec in zip(logs, summary.runs)}
    clbf_log, clbf = by_kind["clbf"]
    fcc_log, fcc = by_kind["fccbf"]
    ev = clbf_log.first_event(EVENT_UNSAFE)
    clbf_ok = ev is not None and 3.0 <= ev["time"] <= 6.0
    fcc_ok = not fcc_log.has_event(EVENT_UNSAFE) and fcc.min_b >= -1e-6
    bounds_ok = max(clbf.control_bound_max_violation, fcc.control_bound_max_violation) <= 1e-9
    ok = clbf_ok and fcc_ok and bounds_ok
    fev = fcc_log.first_event(EVENT_UNSAFE)
    detail = (
        f"CLBF violation at t={ev['time'] if ev else None} (need in [3, 6]); "
        f"FCCBF violation at t={fev['time'] if fev else None}, min b={fcc.min_b:.3g}; "
        f"bounds {'ok' if bounds_ok else 'exceeded'}"
    )
    record(4, ok, detail)
    assert ok, detail


def _random_qp(rng):
    m = int(rng.integers(0, 5))
    rows = tuple(
        LinearControlConstraint(rng.normal(size=2), float(rng.uniform(-3, 3)), f"r{i}") for i in range(m)
    )
    lim = rng.uniform(0.5, 3.0, size=2)
    return QpProblem(np.eye(2), rows, ControlBounds(-lim, lim), frozenset())


def test_criterion_5_qp_oracle_equivalence():
    rng = np.random.default_rng(20240611)
    mismatches, kkt_fail, feasible = 0, 0, 0
    for _ in range(100):
        p = _random_qp(rng)
        s = solve(p)
        A = np.array([r.coeff for r in p.rows]).reshape(-1, 2)
        b = np.array([-r.offset for r in p.rows])
        Ab, bb = box_rows(p.bounds.u_min, p.bounds.u_max)
        ref = qp_enumerate(np.eye(2), np.vstack([A, Ab]), np.concatenate([b, bb]))
        if ref is None:
            mismatches += s.status != STATUS_INFEASIBLE
            continue
        feasible += 1
        if s.status != STATUS_OPTIMAL or np.max(np.abs(s.u - ref)) > 1e-6:
            mismatches += 1
        elif not kkt_check(p, s):
            kkt_fail += 1
    ok = mismatches == 0 and kkt_fail == 0
    detail = f"100 problems ({feasible} feasible): {mismatches} mismatches > 1e-6, {kkt_fail} KKT failures"
    record(5, ok, detail)
    assert ok, detail


def test_criterion_6_conservativeness():
    sc = load_scenario("case_study_4obs")
    rng = np.random.default_rng(6)
    lo, hi = (-4.0, -4.0), (4.0, 4.0)
    outside = lambda y: all(s.constraint(y) >= 0 for s in sc.safety)  # noqa: E731
    decoupled, exceptions = 0, []
    for draw in range(50):
        r = float(rng.uniform(0.05, 1.0))
        k = float(math.exp(rng.uniform(math.log(0.05), math.log(3.0))))
        x0 = sc.initial_states[draw % len(sc.initial_states)]
        reach = reachable_set(sc.goal, x0, box=(lo, hi), region=outside)
        rep = check_validity_sampled(FccbfSpec(sc.goal, r, k, sc.t_f), sc.system, sc.bounds, reach, 500, seed=draw)
        decoupled += rep.decoupled_pass
        if rep.decoupled_pass and not rep.pointwise_pass:
            exceptions.append(draw)
    ok = not exceptions
    detail = f"50 draws, {decoupled} decoupled passes, exceptions: {exceptions}"
    record(6, ok, detail)
    assert ok, detail


def test_criterion_7_hocbf_desk_check():
    logs, summary = run_batch(load_scenario("hocbf_desk_1d"), workers=1)
    log = logs[0]
    min_x = float(np.min(log.states[:, 0]))
    max_u = float(np.max(np.abs(log.controls)))
    horizon_ok = log.times[-1] == pytest.approx(10.0)
    DI = double_integrator_1d()
    spec = HocbfSpec(position_floor(0.0, "b"), (1.0, 1.0))
    rng = np.random.default_rng(7)
    worst = 0.0
    for x, v in rng.uniform(-5.0, 5.0, size=(100, 2)):
        row = build_hocbf(spec, DI, [x, v])
        c, o = hocbf_floor_row(x, v, 1.0, 1.0)
        worst = max(worst, abs(row.coeff[0] - c), abs(row.offset - o), abs(row.offset - (2 * v + x)))
    ok = min_x >= -1e-6 and max_u <= 2.0 + 1e-9 and horizon_ok and worst <= 1e-12
    detail = f"min x={min_x:.3g} over [0, {log.times[-1]:g}], max |u|={max_u:.3g}, symbolic row max error {worst:.2g}"
    record(7, ok, detail)
    assert ok, detail


def test_criterion_8_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        subprocess.run(
            [sys.executable, "-m", "fccbf.cli", "run", "case_study_4obs", "--seed", "2024", "--out", str(d)],
            check=True, capture_output=True,
        )
    names = sorted(p.name for p in dirs[0].iterdir())
    differ = [n for n in names if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    same_set = names == sorted(p.name for p in dirs[1].iterdir())
    ok = same_set and not differ and any(n.endswith(".csv") for n in names) and "summary.json" in names
    detail = f"{len(names)} files compared, differing: {differ}"
    record(8, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    import tempfile

    tests = [
        test_criterion_1_case_study_convergence,
        test_criterion_2_exponential_envelope,
        test_criterion_3_k_interval_numerics,
        test_criterion_4_clbf_comparison,
        test_criterion_5_qp_oracle_equivalence,
        test_criterion_6_conservativeness,
        test_criterion_7_hocbf_desk_check,
    ]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    with tempfile.TemporaryDirectory() as tmp:
        try:
            test_criterion_8_determinism(Path(tmp))
        except AssertionError:
            pass
    sys.exit(0 if all("PASS" in RESULTS.get(n, "") for n in range(1, 9)) else 1)
