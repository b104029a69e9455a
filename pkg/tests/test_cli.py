"""Command line driver: exit codes, JSON outputs, reruns, overrides."""

import csv
import json
import subprocess
import sys

import pytest

from urnlab.cli import parse_config, serialize_config
from urnlab.errors import ConfigError

H_ROWS = [
    [0.625, 0.125, 0.0, 0.25],
    [0.125, 0.625, 0.25, 0.0],
    [0.0, 0.25, 0.625, 0.125],
    [0.25, 0.0, 0.125, 0.625],
]


def run_cli(*args, env=None):
    cmd = [sys.executable, "-m", "urnlab", *args]
    return subprocess.run(cmd, capture_output=True, text=True, env=env)


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_spectrum_outputs_canonical_values(tmp_path):
    cfg = write_config(tmp_path, {"matrix": H_ROWS})
    r = run_cli("spectrum", "--config", cfg, "--out-dir", str(tmp_path))
    assert r.returncode == 0
    doc = json.loads(r.stdout)
    assert doc == json.loads((tmp_path / "spectrum.json").read_text())
    lams = sorted(p["lambda"] for p in doc["pairs"])
    assert lams == pytest.approx([0.25, 0.5, 0.75], abs=1e-12)
    assert doc["pi"] == pytest.approx([0.25] * 4, abs=1e-12)
    assert [p["regime"] for p in sorted(doc["pairs"], key=lambda p: p["lambda"])] == [
        "Sub",
        "Critical",
        "Super",
    ]


def test_exit_codes(tmp_path):
    cases = [
        ({"matrix": [[0.5, 0.4], [0.2, 0.8]]}, ["spectrum"], 2),
        ({"matrix": [[1.1, -0.1], [0.2, 0.8]]}, ["spectrum"], 2),
        ({"matrix": [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]]}, ["spectrum"], 3),
        ({"matrix": H_ROWS, "horizon": 20}, ["verify"], 2),
        ({"matrix": H_ROWS, "n0": 50, "t_grid": [0.0, 1.0], "replications": 10}, ["fclt"], 2),
        ({"matrix": H_ROWS, "bogus": 1}, ["spectrum"], 2),
    ]
    for doc, args, want in cases:
        cfg = write_config(tmp_path, doc)
        r = run_cli(*args, "--config", cfg, "--out-dir", str(tmp_path))
        assert r.returncode == want, (args, doc, r.stderr)
        assert r.stderr.strip(), "error path must explain itself on stderr"


def test_missing_config_file(tmp_path):
    r = run_cli("spectrum", "--config", str(tmp_path / "nope.json"))
    assert r.returncode == 2


def test_verify_passes_and_shift_control_fails(tmp_path):
    cfg = write_config(tmp_path, {"matrix": H_ROWS, "horizon": 4})
    r = run_cli("verify", "--config", cfg, "--out-dir", str(tmp_path))
    assert r.returncode == 0
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["passed"] is True
    assert doc["martingale"]["pass"] is True
    assert doc["normalizer"]["max_rel_err"] < 1e-10
    assert [k["pass"] for k in doc["kersting"]] == [True, True, True]

    bad = write_config(tmp_path, {"matrix": H_ROWS, "horizon": 4, "normalizer_shift": 1}, "bad.json")
    r2 = run_cli("verify", "--config", bad, "--out-dir", str(tmp_path))
    assert r2.returncode == 1
    doc2 = json.loads((tmp_path / "verify.json").read_text())
    assert doc2["martingale"]["pass"] is False


SMALL_FCLT = {
    "matrix": H_ROWS,
    "n0": 50,
    "t_grid": [0.0, 0.5, 1.0],
    "replications": 1000,
    "master_seed": 31,
}


def test_fclt_writes_report_and_csvs(tmp_path):
    cfg = write_config(tmp_path, SMALL_FCLT)
    r = run_cli("fclt", "--config", cfg, "--out-dir", str(tmp_path), "--workers", "1")
    assert r.returncode in (0, 1)
    report = json.loads((tmp_path / "report.json").read_text())
    assert json.loads(r.stdout) == report
    assert report["config"]["replications"] == 1000
    assert report["config"]["master_seed"] == 31
    with (tmp_path / "covariance.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["i", "j", "s", "t", "empirical", "theory", "stderr", "z"]
    ncoords = 3 * 3
    assert len(rows) - 1 == ncoords * (ncoords + 1) // 2
    with (tmp_path / "moments.csv").open() as fh:
        mrows = list(csv.reader(fh))
    assert mrows[0] == ["statistic", "n", "value", "stderr"]


def test_fclt_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SMALL_FCLT)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    out1.mkdir(), out2.mkdir()
    r1 = run_cli("fclt", "--config", cfg, "--out-dir", str(out1), "--workers", "1")
    r2 = run_cli("fclt", "--config", cfg, "--out-dir", str(out2), "--workers", "4")
    assert r1.returncode == r2.returncode
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "covariance.csv").read_bytes() == (out2 / "covariance.csv").read_bytes()
    assert (out1 / "moments.csv").read_bytes() == (out2 / "moments.csv").read_bytes()


def test_fclt_seed_and_replication_overrides(tmp_path):
    cfg = write_config(tmp_path, SMALL_FCLT)
    r = run_cli(
        "fclt", "--config", cfg, "--out-dir", str(tmp_path),
        "--seed", "999", "--replications", "1200",
    )
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["master_seed"] == 999
    assert report["config"]["replications"] == 1200


def test_workers_env_var(tmp_path):
    import os

    cfg = write_config(tmp_path, SMALL_FCLT)
    env = dict(os.environ, URNLAB_WORKERS="2")
    r = run_cli("fclt", "--config", cfg, "--out-dir", str(tmp_path), env=env)
    assert r.returncode in (0, 1)
    env_bad = dict(os.environ, URNLAB_WORKERS="many")
    r2 = run_cli("fclt", "--config", cfg, "--out-dir", str(tmp_path), env=env_bad)
    assert r2.returncode == 2


def test_simulate_writes_trajectory(tmp_path):
    cfg = write_config(tmp_path, {"matrix": H_ROWS, "steps": 200, "master_seed": 12})
    r = run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path))
    assert r.returncode == 0
    summary = json.loads(r.stdout)
    assert summary["steps"] == 200
    assert summary["final_n"] == 200
    assert summary["final_total"] == pytest.approx(201.0, abs=1e-9)
    with (tmp_path / "trajectory.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "color", "proj_0", "dz_0", "proj_1", "dz_1", "proj_2", "dz_2"]
    assert len(rows) - 1 == 200
    with (tmp_path / "diagnostics.csv").open() as fh:
        drows = list(csv.reader(fh))
    assert drows[0][0] == "n"


def test_config_round_trip_idempotent():
    raw = json.dumps(SMALL_FCLT)
    c1 = parse_config(raw)
    s1 = serialize_config(c1)
    assert parse_config(s1) == c1
    assert serialize_config(parse_config(s1)) == s1


def test_config_rejects_unknown_threshold_and_eigenpair_fields():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"matrix": H_ROWS, "thresholds": {"bogus": 1.0}}))
    with pytest.raises(ConfigError):
        parse_config(
            json.dumps(
                {
                    "matrix": [[0.9, 0.1], [0.2, 0.8]],
                    "eigenpairs": [{"lambda": 0.7, "xi": [1, -2], "extra": 0}],
                }
            )
        )
    with pytest.raises(ConfigError):
        parse_config("not json")
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"t_grid": [0.0, 1.0]}))  # matrix required
