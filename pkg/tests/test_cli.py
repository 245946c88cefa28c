import json

import numpy as np
import pytest

from rabi_ccd.cli import main, parse_value, read_config, read_csv, write_csv
from rabi_ccd.experiments import EnsembleResult

INI = """[run]
t_final = 60e-6
record_interval = 20e-6
fock = 10
layers = 1
[targets]
omega_mode = 2pi*5
"""


def test_parse_value():
    assert parse_value("2pi*5") == pytest.approx(2 * np.pi * 5e3)
    assert parse_value("3") == 3 and parse_value("1e-3") == 1e-3
    assert parse_value("true") is True
    assert parse_value("1, 2.5") == (1, 2.5)
    assert parse_value("up_tls") == "up_tls"


def test_read_config_errors(tmp_path):
    with pytest.raises(ValueError):
        read_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[weird]\nx = 1\n")
    with pytest.raises(ValueError):
        read_config(bad)


def _result(obs, n=1):
    grid = np.array([0.0, 1 / 3, 2e-7])
    mean = {k: np.array([np.pi, -1 / 7, 1e-300]) for k in obs}
    err = {k: np.zeros(3) for k in obs}
    return EnsembleResult("t", grid, "time_s", list(obs), mean, err, n, 0, [1])


def test_csv_round_trip_is_bit_exact(tmp_path):
    res = _result(["a", "b"])
    path = tmp_path / "r.csv"
    write_csv(res, path)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    label, grid, means, errs = read_csv(path)
    assert label == "time_s" and np.array_equal(grid, res.grid)
    assert np.array_equal(means["a"], res.mean["a"]) and np.array_equal(errs["b"], np.zeros(3))
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert meta["trajectory_seeds"] == [1] and "code_version" in meta


def test_csv_without_observables(tmp_path):
    path = tmp_path / "e.csv"
    write_csv(_result([]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time_s" and len(lines) == 4


def test_cli_runs_are_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.ini").write_text(INI)
    args = ["rabi", "--config", "c.ini", "--seed", "42", "--trajectories", "3"]
    assert main(args + ["--out", "r1.csv"]) == 0
    assert main(args + ["--out", "r2.csv", "--workers", "2"]) == 0
    assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
    assert (tmp_path / "r1.csv.meta.json").read_bytes() == (tmp_path / "r2.csv.meta.json").read_bytes()
    header = (tmp_path / "r1.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "time_s" and "mean_F1_up_tls" in header and "stderr_P1_up_perp" in header


def test_cli_error_record(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["dirac", "--config", str(tmp_path / "nope.ini"), "--out", str(out)]) == 1
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == "error" and rec["type"] == "ValueError"
    assert json.loads((tmp_path / "x.csv.error.json").read_text()) == rec
    with pytest.raises(SystemExit) as exc:
        main(["rabi", "--bogus"])
    assert exc.value.code != 0


def test_validate_exits_zero(capsys):
    assert main(["validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out
