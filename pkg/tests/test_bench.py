import csv
import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from fccbf.bench import (
    export,
    load_raw,
    load_scenario,
    parse_scenario,
    run_batch,
    run_passes,
    shipped_scenarios,
    verify,
)
from fccbf.cli import main
from fccbf.errors import ScenarioError
from fccbf.qp import STATUSES


@pytest.fixture(scope="module")
def case_raw():
    raw, _ = load_raw("case_study_4obs")
    return raw


@pytest.fixture(scope="module")
def case_out(tmp_path_factory):
    sc = load_scenario("case_study_4obs")
    logs, summary = run_batch(sc)
    out = tmp_path_factory.mktemp("case")
    export(logs, summary, out)
    return sc, logs, summary, out


def _edit(raw, **changes):
    raw = json.loads(json.dumps(raw))
    raw.update(changes)
    return raw


# -- scenario files ----------------------------------------------------------

def test_shipped_scenarios_listed():
    assert shipped_scenarios() == ["case_study_4obs", "clbf_compare_1obs", "hocbf_desk_1d"]


def test_case_study_loads():
    sc = load_scenario("case_study_4obs")
    centers = sorted(tuple(s.constraint.grad(np.zeros(2)) / -2.0) for s in sc.safety)
    assert centers == [(-2.0, -2.5), (-2.0, 2.5), (2.0, -2.5), (2.0, 2.5)]
    assert sc.initial_states.shape == (10, 2)
    assert sc.t_f == 6.0 and sc.sim.dt == 0.01 and sc.sim.n_steps == 600
    assert np.all(np.abs(sc.initial_states) <= 4.0)
    for x in sc.initial_states:
        assert sc.goal(x) < 0
        assert all(s.constraint(x) > 0 for s in sc.safety)


def test_initial_states_depend_only_on_seed():
    a = load_scenario("case_study_4obs", seed=5).initial_states
    b = load_scenario("case_study_4obs", seed=5).initial_states
    c = load_scenario("case_study_4obs", seed=6).initial_states
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_auto_parameters_lie_in_interval(case_raw):
    sc = parse_scenario(case_raw)
    for x in sc.initial_states:
        res = sc.resolve(0, x)
        assert res.params["r"] == pytest.approx(0.25)
        assert res.params["k_min"] <= res.params["k"] <= res.params["k_max"]


@pytest.mark.parametrize(
    "change, path",
    [
        ({"t_f": 0}, "t_f"),
        ({"t_f": -1.0}, "t_f"),
        ({"schema_version": 2}, "schema_version"),
        ({"system": "unicycle"}, "system"),
        ({"relaxation": "sometimes"}, "relaxation"),
        ({"bounds": {"u_min": [1.0, -2.0], "u_max": [-1.0, 2.0]}}, "bounds"),
        ({"obstacles": [{"center": [0.0], "radius": 1.0}]}, "obstacles[0].center"),
        ({"obstacles": [{"center": [3.0, 3.0], "radius": -1.0}]}, "obstacles[0].radius"),
        ({"surprise": 1}, "scenario"),
    ],
)
def test_bad_scenarios_name_the_field(case_raw, change, path):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(_edit(case_raw, **change))
    assert str(exc.value).startswith(path)


def test_fixed_start_inside_obstacle_rejected(case_raw):
    with pytest.raises(ScenarioError, match="init"):
        parse_scenario(_edit(case_raw, init={"fixed": [[2.0, 2.5]]}))


def test_empty_k_interval_reported_at_load(case_raw):
    tight = _edit(case_raw, bounds={"limit": 0.05}, init={"fixed": [[-3.5, -3.5]]})
    with pytest.raises(ScenarioError, match=r"controllers\[0\]\.k"):
        parse_scenario(tight)


def test_unknown_scenario_name():
    with pytest.raises(ScenarioError):
        load_scenario("no_such_scenario")


def test_zero_count_runs_nothing(tmp_path):
    sc = load_scenario("case_study_4obs", count=0)
    logs, summary = run_batch(sc)
    assert logs == [] and summary.runs == []
    export(logs, summary, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["summary.json"]
    assert verify(tmp_path) == []


# -- batch output ------------------------------------------------------------

def test_case_study_files(case_out):
    _, _, summary, out = case_out
    names = sorted(p.name for p in out.iterdir())
    runs = [n for n in names if n.startswith("run_")]
    assert len(runs) == 10 and "summary.json" in names
    assert len([n for n in names if n.endswith(".json")]) == 1


def test_run_csv_layout(case_out):
    _, _, _, out = case_out
    with open(out / "run_0.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    assert header == ["t", "x1", "x2", "u1", "u2", "h", "V", "b_1", "b_2", "b_3", "b_4", "qp_status", "slack_total"]
    assert len(body) == 601
    assert {r[-2] for r in body} <= set(STATUSES)
    assert float(body[0][0]) == 0.0 and float(body[-1][0]) == pytest.approx(6.0)


def test_case_study_verdict(case_out):
    _, _, summary, out = case_out
    assert summary.verdict
    data = json.loads((out / "summary.json").read_text())
    assert data["verdict"] == "pass"
    for rec in data["runs"]:
        assert rec["passed"] and run_passes(rec)
        assert rec["h_at_tf"] >= 0
        assert rec["min_b"] >= -1e-6
        assert rec["control_bound_max_violation"] <= 1e-9
    assert len(data["design"]) == 10


def test_verify_clean_then_catches_tampering(case_out, tmp_path):
    _, logs, summary, _ = case_out
    export(logs, summary, tmp_path)
    assert verify(tmp_path) == []
    path = tmp_path / "run_3.csv"
    rows = list(csv.reader(open(path, newline="")))
    rows[5][3] = "2.5"
    rows[7][-2] = "bogus"
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    problems = verify(tmp_path)
    assert any("outside bounds" in p for p in problems)
    assert any("unknown qp_status" in p for p in problems)


def test_verify_catches_forged_verdict(case_out, tmp_path):
    _, logs, summary, _ = case_out
    export(logs, summary, tmp_path)
    data = json.loads((tmp_path / "summary.json").read_text())
    data["runs"][0]["h_at_tf"] = -1.0
    (tmp_path / "summary.json").write_text(json.dumps(data))
    problems = verify(tmp_path)
    assert any("pass flag" in p for p in problems)
    assert any("stored verdict" in p for p in problems)


def test_export_is_deterministic(case_out, tmp_path):
    sc, _, _, out = case_out
    logs, summary = run_batch(sc)
    export(logs, summary, tmp_path)
    cmp = filecmp.dircmp(out, tmp_path)
    assert cmp.left_only == [] and cmp.right_only == []
    _, mismatch, errors = filecmp.cmpfiles(out, tmp_path, cmp.common_files, shallow=False)
    assert mismatch == [] and errors == []


def test_workers_do_not_change_output(tmp_path):
    sc = load_scenario("case_study_4obs", count=4)
    a, b = tmp_path / "serial", tmp_path / "parallel"
    export(*run_batch(sc, workers=1), a)
    export(*run_batch(sc, workers=2), b)
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_backends_give_identical_output(tmp_path):
    sc = load_scenario("case_study_4obs", count=2)
    a, b = tmp_path / "py", tmp_path / "cy"
    export(*run_batch(sc, backend="python"), a)
    export(*run_batch(sc, backend="cython"), b)
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


@pytest.mark.parametrize("seed", [0, 1, 7, 99])
def test_case_study_other_seeds_stay_safe(seed):
    _, summary = run_batch(load_scenario("case_study_4obs", seed=seed))
    for rec in summary.runs:
        assert rec.error is None
        assert rec.min_b >= -1e-6
        assert rec.control_bound_max_violation <= 1e-9
        assert rec.h_at_tf >= 0


def test_desk_scenario_passes():
    logs, summary = run_batch(load_scenario("hocbf_desk_1d"))
    assert summary.verdict
    assert logs[0].states.shape == (1001, 2)
    assert summary.runs[0].kind == "safety-only" and summary.runs[0].h_at_tf is None


# -- command line ------------------------------------------------------------

def test_cli_run_and_verify(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "case_study_4obs", "--count", "2", "--out", str(out)]) == 0
    assert "verdict: pass" in capsys.readouterr().out
    assert main(["verify", str(out)]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    raw, _ = load_raw("case_study_4obs")
    bad.write_text(yaml.safe_dump(_edit(raw, t_f=0)))
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "t_f" in capsys.readouterr().err
    assert main(["run"]) == 2
    assert main(["verify", str(tmp_path / "missing")]) == 1
    assert main(["list"]) == 0
    assert "hocbf_desk_1d" in capsys.readouterr().out


def test_cli_design_reports(capsys):
    assert main(["design", "case_study_4obs", "--count", "2"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert len(reports) == 2
    assert all(r["pointwise_pass"] for r in reports)
    assert main(["design", "hocbf_desk_1d"]) == 2


def test_pure_python_switch_selects_fallback():
    env = dict(os.environ, FCCBF_PURE_PYTHON="1")
    code = "from fccbf.qp import BACKEND, available_backends; print(BACKEND, available_backends())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python ['python']"
