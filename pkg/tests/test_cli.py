import csv
import json
import os
import subprocess
import sys

import pytest

from tdho import config as C
from tdho.cli import COLUMNS, ReportRow, main
from tdho.errors import ValidationError
from tdho.grid import load_snapshot

SMALL_FACT = {
    "grid": {"N": 512, "L": 32.0},
    "schedule": {"times": [2.0], "dt_max": 0.02},
}
SMALL_WAVEOP = {
    "grid": {"N": 1024, "L": 256.0},
    "potential": None,
    "state": {"width": 4.0},
    "schedule": {"k_min": 1, "k_max": 2},
}


def _run(tmp_path, command, over=None, extra=()):
    argv = [command, "--out", str(tmp_path / "out")]
    if over is not None:
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(over))
        argv += ["--config", str(cfg)]
    code = main(argv + list(extra))
    return code, tmp_path / "out" / f"{command}.csv"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_report_row_status():
    assert ReportRow("a", 1e-9, 1e-8).status == "pass"
    assert ReportRow("a", 1e-7, 1e-8).status == "fail"
    assert ReportRow("a", 1.0 + 1e-9, 1e-8, 1.0).status == "pass"
    assert ReportRow("a", float("nan"), 1.0).status == "fail"
    assert ReportRow("a", 3.0).status == "info"


def test_merge_and_validation():
    base = {"a": {"b": 1, "c": 2}, "d": None}
    assert C.merge(base, {"a": {"c": 5}, "d": {"e": 1}}) == {"a": {"b": 1, "c": 5}, "d": {"e": 1}}
    for cmd in C.COMMANDS:
        C.validate(C.default_config(cmd))
    with pytest.raises(ValidationError):
        C.load_config("waveop", json.dumps({"grid": {"bogus": 1}}))
    with pytest.raises(ValidationError):
        C.load_config("waveop", json.dumps({"sweep": [{"grid": {"N": "many"}}]}))
    with pytest.raises(ValidationError):
        C.default_config("nope")


def test_run_id_ignores_output(tmp_path):
    a = C.default_config("waveop")
    b = C.merge(a, {"output": {"dir": str(tmp_path)}})
    assert C.run_id(a) == C.run_id(b)
    assert C.run_id(a) != C.run_id(C.merge(a, {"grid": {"N": 4096}}))


def test_unknown_key_exits_1(tmp_path, capsys):
    code, _ = _run(tmp_path, "factorization", {"model": {"mass": 1}})
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_factorization_csv_is_reproducible(tmp_path):
    over = dict(SMALL_FACT, schedule={"times": [2.0], "dt_max": 0.005})
    code, path = _run(tmp_path, "factorization", over)
    assert code == 0
    first = path.read_bytes()
    rows = _rows(path)
    assert [r["metric"] for r in rows] == ["residual"]
    assert rows[0]["status"] == "pass"
    assert list(rows[0]) == list(COLUMNS)
    code, path = _run(tmp_path, "factorization", over)
    assert path.read_bytes() == first


def test_coarse_steps_exit_2(tmp_path):
    over = dict(SMALL_FACT, schedule={"times": [2.0], "dt_max": 0.2})
    code, path = _run(tmp_path, "factorization", over)
    assert code == 2
    assert _rows(path)[0]["status"] == "fail"


def test_fundamental_short_horizon(tmp_path):
    code, path = _run(tmp_path, "fundamental", {"schedule": {"T_max": 50.0, "times": [0.0, 1.0, 50.0]}})
    assert code == 0
    metrics = {r["metric"]: r for r in _rows(path)}
    assert float(metrics["closed_form_max_error"]["value"]) < 1e-8
    assert metrics["c3"]["status"] == "pass"


def test_sweep_in_parallel(tmp_path):
    over = {"schedule": {"T_max": 20.0, "times": [1.0]},
            "sweep": [{"schedule": {"T_max": 10.0}}, {"schedule": {"T_max": 30.0}}]}
    code, path = _run(tmp_path, "fundamental", over, ["--jobs", "2"])
    assert code == 0
    ids = {r["run_id"] for r in _rows(path)}
    assert len(ids) == 2
    for rid in ids:
        assert (tmp_path / "out" / rid / "fundamental.csv").exists()


def test_waveop_snapshot(tmp_path):
    code, path = _run(tmp_path, "waveop", SMALL_WAVEOP, ["--snapshot"])
    assert code == 0
    psi = load_snapshot(tmp_path / "out" / "waveop.tdho")
    assert psi.grid.N == 1024
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)
    rows = {r["metric"]: r for r in _rows(path)}
    assert float(rows["final_gap"]["value"]) < 1e-12


def test_print_config(capsys):
    assert main(["magnetic", "--print-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["grid"]["dim"] == 2


def test_bad_jobs(tmp_path):
    code, _ = _run(tmp_path, "fundamental", None, ["--jobs", "0"])
    assert code == 1


def test_console_script_logging(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL_WAVEOP))
    env = dict(os.environ, TDHO_LOG="INFO")
    proc = subprocess.run([sys.executable, "-m", "tdho.cli", "waveop", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "INFO" in proc.stderr
