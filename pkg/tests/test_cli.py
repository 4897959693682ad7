"""Exit codes, config resolution, artifacts, and determinism of the CLI."""

import json
import os

import pytest

from kamforge import cli


def run(args):
    return cli.main(args)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_unknown_experiment_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        run(["definitely-not-an-experiment"])
    assert err.value.code == 2
    assert run(["run", "--experiment", "definitely-not",
                "--out", str(tmp_path)]) == 2


def test_birkhoff_run_writes_all_artifacts(tmp_path):
    out = tmp_path / "b"
    assert run(["birkhoff", "--jmax", "6", "--divisor-range", "10",
                "--out", str(out)]) == 0
    for name in ("resolved_config.json", "results.csv", "results.json",
                 "summary.json", "birkhoff.png"):
        assert (out / name).exists()
    summary = read_json(out / "summary.json")
    assert summary["passed"] is True
    assert summary["residual_norm"] <= 1e-12
    resolved = read_json(out / "resolved_config.json")
    assert resolved["schema_version"] == 1
    assert resolved["params"]["mass"] == 1.0  # defaults made explicit
    assert "out" not in resolved
    rows = read_json(out / "results.json")["rows"]
    assert rows[0]["min_scaled"] > 0


def test_run_alias_dispatches(tmp_path):
    out = tmp_path / "rb"
    assert run(["run", "--experiment", "birkhoff", "--mass", "1",
                "--sites", "1,2", "--jmax", "6", "--divisor-range", "10",
                "--out", str(out)]) == 0


def test_flags_override_config_file(tmp_path):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({
        "schema_version": 1, "experiment": "measure",
        "grid": 8, "gamma_list": [1e-2, 1e-3], "tau": 1.5}))
    out = tmp_path / "m"
    assert run(["measure", "--config", str(cfgfile), "--grid", "16",
                "--out", str(out)]) == 0
    resolved = read_json(out / "resolved_config.json")
    assert resolved["params"]["grid"] == 16
    assert resolved["params"]["gamma_list"] == [1e-2, 1e-3]


def test_config_validation_errors(tmp_path):
    bad = tmp_path / "bad.json"
    out = str(tmp_path / "x")
    bad.write_text(json.dumps({"schema_version": 1, "nonsense_key": 3}))
    assert run(["measure", "--config", str(bad), "--out", out]) == 2
    bad.write_text(json.dumps({"schema_version": 99}))
    assert run(["measure", "--config", str(bad), "--out", out]) == 2
    bad.write_text(json.dumps({"schema_version": 1,
                               "experiment": "birkhoff"}))
    assert run(["measure", "--config", str(bad), "--out", out]) == 2
    bad.write_text("{not json")
    assert run(["measure", "--config", str(bad), "--out", out]) == 2
    assert run(["birkhoff", "--sites", "1,zz", "--out", out]) == 2
    assert run(["measure", "--mode", "bogus", "--out", out]) == 2
    assert run(["simulate", "--functional", "M_yxv",
                "--nonlinearity", "yt2", "--out", out]) == 2


def test_reruns_are_byte_identical(tmp_path):
    args = ["measure", "--grid", "16", "--gamma-list", "1e-2,1e-3"]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    names = sorted(os.listdir(out1))
    assert names == sorted(os.listdir(out2))
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_failed_check_exits_1(tmp_path):
    out = tmp_path / "nan"
    rc = run(["simulate", "--nonlinearity", "yx_pow", "--power", "3",
              "--amplitude", "0.8", "--t-final", "20",
              "--out", str(out)])
    assert rc == 1
    summary = read_json(out / "summary.json")
    assert summary["passed"] is False
    assert summary["stopped"] == "nan-detected"
    assert summary["stopped_at"] > 0


def test_all_acceptance_subset(tmp_path, capsys):
    out = tmp_path / "aa"
    assert run(["all-acceptance", "--only", "2", "--out", str(out)]) == 0
    rows = read_json(out / "results.json")["rows"]
    assert len(rows) == 1 and rows[0]["id"] == 2 and rows[0]["passed"]
    assert "twist-identity" in capsys.readouterr().out
    assert (out / "all-acceptance.png").exists()
