import csv
import json
import subprocess
import sys

import pytest

from conftest import config_path
from drchance.cli import main


@pytest.fixture
def solved_result(tmp_path):
    out = tmp_path / "r.json"
    assert main(["solve", str(config_path("ex1")), "--degree", "6", "--variant", "stokes",
                 "--out", str(out)]) == 0
    return out


def test_solve_writes_result_and_manifest(solved_result):
    data = json.loads(solved_result.read_text())
    assert data["status"] in ("optimal", "near_optimal")
    assert data["degree"] == 6 and data["order"] == 3
    man = json.loads((solved_result.parent / "r.json.manifest.json").read_text())
    assert [a["path"] for a in man["artifacts"]] == [str(solved_result)]
    assert {"build", "solve"} <= man["timings"].keys()
    assert man["input_hash"] == data["problem_hash"]
    # no temp files left behind
    assert sorted(p.name for p in solved_result.parent.iterdir()) == ["r.json", "r.json.manifest.json"]


def test_missing_epsilon_exit_code(tmp_path, capsys):
    data = json.loads(config_path("ex1").read_text())
    del data["epsilon"]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(data))
    assert main(["solve", str(cfg)]) == 1
    assert "epsilon: required" in capsys.readouterr().err


def test_degree_below_minimum_exit_code(capsys):
    assert main(["solve", str(config_path("ex1")), "--degree", "1"]) == 1
    assert "degree" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    # an iteration budget of zero can not reach any tolerance
    out = tmp_path / "fail.json"
    assert main(["solve", str(config_path("ex1")), "--degree", "4", "--max-iter", "0",
                 "--out", str(out)]) == 2
    assert json.loads(out.read_text())["status"] == "numerical_failure"


def test_eval_grid_and_intervals(solved_result, tmp_path):
    out = tmp_path / "w.csv"
    assert main(["eval", str(solved_result), "--grid", "201", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x1", "w", "member(0.3)"] and len(rows) == 202
    ivs = list(csv.reader((tmp_path / "w.intervals.csv").open()))
    assert ivs[0] == ["lo", "hi"]


def test_eval_single_point(solved_result, tmp_path):
    out = tmp_path / "one.csv"
    assert main(["eval", str(solved_result), "--grid", "0.95:0.95:1", "--out", str(out)]) == 0
    assert len(list(csv.reader(out.open()))) == 2


def test_eval_epsilon_out_of_range(solved_result, capsys):
    assert main(["eval", str(solved_result), "--epsilon", "1.5"]) == 1
    assert "epsilon" in capsys.readouterr().err


def test_eval_malformed_result(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    assert main(["eval", str(bad)]) == 1


def test_compare_and_table(solved_result, tmp_path):
    out = tmp_path / "cmp.json"
    assert main(["compare", str(solved_result), "--config", str(config_path("ex1")),
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert {"coverage", "violations", "grid", "timings"} <= rep.keys()
    assert rep["violations"] == 0
    tab = tmp_path / "tab.json"
    assert main(["compare", str(solved_result), "--table", "--out", str(tab)]) == 0
    rows = json.loads(tab.read_text())["rows"]
    assert [r["epsilon"] for r in rows] == [0.5, 0.25, 0.125, 0.0625, 0.03125]


def test_compare_hash_mismatch(solved_result, tmp_path, capsys):
    data = json.loads(config_path("ex1").read_text())
    data["epsilon"] = 0.2
    other = tmp_path / "other.json"
    other.write_text(json.dumps(data))
    assert main(["compare", str(solved_result), "--config", str(other)]) == 1
    assert "problem_hash" in capsys.readouterr().err


def test_oracle_command(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle", str(config_path("ex1")), "--x-steps", "21", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x1", "kappa_hat", "feasible(0.3)"] and len(rows) == 22


def test_manifest_hash_tracks_config_content(tmp_path):
    data = json.loads(config_path("ex1").read_text())
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    a.write_text(json.dumps(data))
    b.write_text(json.dumps(data, indent=4))      # same content, different bytes
    data["seed"] += 1
    c.write_text(json.dumps(data))
    hashes = []
    for cfg in (a, b, c):
        out = tmp_path / (cfg.stem + ".csv")
        assert main(["oracle", str(cfg), "--x-steps", "5", "--out", str(out)]) == 0
        hashes.append(json.loads((tmp_path / (out.name + ".manifest.json")).read_text())["input_hash"])
    assert hashes[0] == hashes[1] != hashes[2]


def test_env_tolerance_is_honoured(tmp_path, monkeypatch):
    monkeypatch.setenv("DRCHANCE_SOLVER_TOL", "not-a-number")
    assert main(["solve", str(config_path("ex1")), "--degree", "4",
                 "--out", str(tmp_path / "r.json")]) == 1


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "drchance.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "drchance" in proc.stdout
