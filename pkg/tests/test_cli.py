import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from cogmac.cli import CSV_HEADER, EXIT_BUDGET, EXIT_CONFIG, EXIT_INFEASIBLE, main, parse_values
from cogmac.config import load_bundle
from cogmac.model import SensingAccessParams, dual_view
from cogmac.throughput_exact import normalized_throughput_ne

TINY = {
    "name": "tiny", "M": 2, "N": 2, "p_idle": [0.8, 0.5], "snr_db": [[-12, -18], [-18, -12]],
    "assignment": {"per_su": {1: [1, 2], 2: [2]}},
    "params": {"tau": [[2e-3, 1e-3], [0.0, 1.5e-3]], "a": [1, 2], "p": 0.1},
}


def write_yaml(tmp_path, data, name="sc.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_rows(out):
    with open(out / "results.csv", newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_parse_values():
    assert parse_values("0.1:1.0:0.1") == pytest.approx([0.1 * k for k in range(1, 11)])
    assert parse_values("0.5, 0.9") == [0.5, 0.9]
    with pytest.raises(ValueError):
        parse_values("0:1:0")


def test_analytic_mode_writes_report_and_csv(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--mode", "analytic", "--scenario", write_yaml(tmp_path, TINY), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == CSV_HEADER and len(rows) == 2
    report = json.loads((out / "report.json").read_text())
    b = load_bundle(TINY)
    assert float(rows[1][1]) == normalized_throughput_ne(b.scenario, b.params, b.assignment).nt
    assert report["result"]["nt"] == float(rows[1][1])
    assert rows[1][4] == "1 2"
    assert b"\r\n" not in (out / "results.csv").read_bytes()
    assert "nt =" in capsys.readouterr().out


def test_sweep_over_idle_probability_round_trips(tmp_path):
    out = tmp_path / "sweep"
    code = main(["--mode", "sweep", "--scenario", "table1_4x4", "--sweep-var", "p_idle",
                 "--sweep-values", "0.1:1.0:0.1", "--p-step", "0.05", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == CSV_HEADER and len(rows) == 11
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0.1 * k for k in range(1, 11)])
    report = json.loads((out / "report.json").read_text())
    for row, point in zip(rows[1:], report["sweep"]["points"]):
        res = point["result"]
        sc = load_bundle("table1_4x4", p_idle=float(row[0])).scenario
        asg = dual_view([{j - 1 for j in res["assignment"]["per_su"][str(i + 1)]} for i in range(4)], 4, 4)
        params = SensingAccessParams(np.array(res["params"]["tau"]), np.array(res["params"]["a"]),
                                     res["params"]["p"])
        assert normalized_throughput_ne(sc, params, asg).nt == float(row[1])
        assert float(row[2]) == params.p and float(row[3]) == params.tau_max


def test_simulate_is_byte_identical_across_runs_and_workers(tmp_path):
    path = write_yaml(tmp_path, TINY)
    blobs = []
    for k, workers in enumerate(("1", "1", "3")):
        out = tmp_path / f"s{k}"
        assert main(["--mode", "simulate", "--scenario", path, "--seed", "42", "--cycles", "9000",
                     "--workers", workers, "--trace", "--out", str(out)]) == 0
        blobs.append(((out / "results.csv").read_bytes(), (out / "trace.csv").read_bytes()))
    assert blobs[0] == blobs[1] == blobs[2]
    report = json.loads((tmp_path / "s0" / "report.json").read_text())
    assert set(report["result"]["agreement"]) == {"abs_diff", "within_3_stderr", "within_5_percent"}


def test_zero_channels_is_a_config_error(tmp_path, capsys):
    bad = dict(TINY, M=0)
    code = main(["--mode", "analytic", "--scenario", write_yaml(tmp_path, bad), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "M" in capsys.readouterr().err


def test_unknown_scenario_is_a_config_error(tmp_path):
    assert main(["--mode", "analytic", "--scenario", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_analytic_without_params_is_a_config_error(tmp_path):
    data = {k: v for k, v in TINY.items() if k != "params"}
    assert main(["--mode", "analytic", "--scenario", write_yaml(tmp_path, data), "--out",
                 str(tmp_path / "o")]) == EXIT_CONFIG


def test_budget_exceeded_exit_code(tmp_path, capsys):
    code = main(["--mode", "analytic", "--scenario", write_yaml(tmp_path, TINY), "--method", "enumerate",
                 "--budget-scenarios", "4", "--out", str(tmp_path / "o")])
    assert code == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_infeasible_target_exit_code(tmp_path):
    data = dict(TINY, N=3, snr_db=-12, pd_target=0.95,
                assignment={"per_su": {1: [1, 2], 2: [1, 2], 3: []}},
                params={"tau": [[1e-3, 1e-3], [1e-3, 1e-3], [0, 0]], "a": [2, 2], "p": 0.1})
    code = main(["--mode", "analytic-re", "--scenario", write_yaml(tmp_path, data), "--pe", "0.05",
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_INFEASIBLE


def test_sweep_needs_values(tmp_path):
    assert main(["--mode", "sweep", "--scenario", "table1_4x4", "--sweep-var", "pe",
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_mode_rejected_by_parser():
    with pytest.raises(SystemExit) as err:
        main(["--mode", "plot", "--scenario", "table1_4x4"])
    assert err.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cogmac", "--mode", "analytic", "--scenario",
                           write_yaml(tmp_path, TINY), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "report.json").exists()
