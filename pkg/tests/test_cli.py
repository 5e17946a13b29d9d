import os
from pathlib import Path

import numpy as np
import pytest

from ofbs.cli import EXIT_CONFIG, EXIT_METRIC, EXIT_NUMERIC, EXIT_OK, main

SMALL_SIM = """
exponent.row0 = 0.75
n = 8
grid_m = 4
replicates = 20
seed = 11
points = 0.5:0.5 1:1
n_ladder = 4 8
"""

SMALL_VERIFY = """
exponent.row0 = 0.75
n = 8
grid_m = 4
replicates = 400
seed = 11
points = 0.5:0.5 1:1
n_ladder = 4 8
fdd.points = 0.5:0.5 1:1
fdd.a = 1 1
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def tree_bytes(out, skip=("run.log",)):
    """Map of relative path -> bytes for every output file except sidecars."""
    got = {}
    for path in sorted(Path(out).rglob("*")):
        if path.is_file() and path.name not in skip:
            got[str(path.relative_to(out))] = path.read_bytes()
    return got


def test_simulate_writes_deterministic_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
    t1, t2 = tree_bytes(out1), tree_bytes(out2)
    assert set(t1) == {"ensemble.bin", "summary.csv", "config.sha256", "config.canonical"}
    assert t1 == t2
    assert (out1 / "run.log").exists()
    captured = capsys.readouterr()
    assert "wrote" in captured.out


def test_missing_config_exits_2_naming_path(tmp_path, capsys):
    missing = tmp_path / "absent.cfg"
    rc = main(["simulate", "--config", str(missing), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "absent.cfg" in capsys.readouterr().err


def test_spectrum_gate_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "d = 2\nexponent.row0 = 1.2 0\nexponent.row1 = 0 0.7\n")
    rc = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "1/2, 1" in capsys.readouterr().err


def test_seed_override_changes_ensemble(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg), "--out", str(out1), "--quiet"])
    main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "99", "--quiet"])
    assert tree_bytes(out1)["ensemble.bin"] != tree_bytes(out2)["ensemble.bin"]


def test_quiet_suppresses_stdout(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_SIM)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert capsys.readouterr().out == ""


def test_cov_closed_form_value(tmp_path):
    cfg = write_cfg(tmp_path, "exponent.row0 = 0.75\npoints = 1:1\n")
    out = tmp_path / "o"
    assert main(["cov", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    lines = (out / "covariance.csv").read_text().strip().splitlines()
    assert lines[0] == "k,l,t_k,s_k,t_l,s_l,row,col,value"
    assert len(lines) == 2
    assert float(lines[1].split(",")[-1]) == pytest.approx(0.64, abs=1e-8)


def test_cov_empty_points_header_only(tmp_path):
    cfg = write_cfg(tmp_path, "exponent.row0 = 0.75\npoints =\n")
    out = tmp_path / "o"
    assert main(["cov", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    assert (out / "covariance.csv").read_text() == "k,l,t_k,s_k,t_l,s_l,row,col,value\n"


def test_cov_duplicate_points_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "exponent.row0 = 0.75\npoints = 0.5:0.5 0.5:0.5\n")
    rc = main(["cov", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == EXIT_CONFIG


def test_verify_passes_and_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VERIFY)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", str(cfg), "--out", str(out1), "--quiet"]) == EXIT_OK
    assert main(["verify", "--config", str(cfg), "--out", str(out2), "--quiet"]) == EXIT_OK
    t1, t2 = tree_bytes(out1), tree_bytes(out2)
    assert set(t1) == {"report.csv", "report.txt", "config.sha256", "config.canonical"}
    assert t1 == t2
    assert "overall: PASS" in t1["report.txt"].decode()


def test_verify_tiny_tolerances_fail_rows_exit_1(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        SMALL_VERIFY + "tol.cov_error = 1e-300\ntol.selfsim = 1e-300\n",
    )
    rc = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == EXIT_METRIC
    err = capsys.readouterr().err
    assert "cov_error" in err and "FAIL" in err


def test_verify_zero_tolerance_rejected(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_VERIFY + "tol.cov_error = 0\n")
    rc = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == EXIT_CONFIG


def test_numeric_failure_exits_3(tmp_path, capsys):
    # an epsilon no finite n can reach makes the Lindeberg threshold search fail
    cfg = write_cfg(tmp_path, SMALL_VERIFY + "epsilon = 1e-300\n")
    rc = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == EXIT_NUMERIC
    assert "Lindeberg" in capsys.readouterr().err


def test_jobs_flag_is_output_invariant(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg), "--out", str(out1), "--quiet"])
    main(["simulate", "--config", str(cfg), "--out", str(out2), "--jobs", "4", "--quiet"])
    assert tree_bytes(out1) == tree_bytes(out2)
