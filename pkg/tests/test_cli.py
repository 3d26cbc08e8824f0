"""End-to-end runs of the command line front end."""

import json
import os

import numpy as np

from multibump import cli

C_STEP = 15.756060010769785


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def test_local_constants(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["local", "--outdir", d, "--mesh", "800"])
    assert rc == 0
    payload = _read_json(os.path.join(d, "local.json"))
    # plumbing check only; the level itself is mesh-limited at this size
    assert abs(payload["c"] - C_STEP) < 1e-4
    assert payload["zeta"] > 0.0
    assert abs(payload["r"] ** 2 - 1.0 / 32.0) < 1e-15
    manifest = _read_json(os.path.join(d, "manifest.json"))
    assert manifest["status"] == "ok"
    assert "local.json" in manifest["outputs"]


def test_solve_roundtrip(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["solve", "--symbols", "10", "--mu", "800",
                   "--cells", "200", "--outdir", d])
    assert rc == 0
    report = _read_json(os.path.join(d, "report.json"))
    assert report["positivity"] is True
    assert report["residual_inf"] < 1e-9
    assert report["identities"]["ii"] < 1e-12
    assert report["symbols"] == [1, 0]
    data = np.genfromtxt(os.path.join(d, "sol.csv"), delimiter=",", names=True)
    assert np.all(data["u"] > 0.0)
    assert len(data) > 100


def test_bad_symbols_is_input_error(tmp_path):
    rc = cli.main(["solve", "--symbols", "102", "--mu", "800",
                   "--outdir", str(tmp_path)])
    assert rc == 2


def test_missing_weight_file_is_input_error(tmp_path):
    rc = cli.main(["solve", "--symbols", "10", "--mu", "800",
                   "--weight", str(tmp_path / "nope.json"),
                   "--outdir", str(tmp_path)])
    assert rc == 2


def test_failed_marker_set_and_cleared(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["solve", "--symbols", "10", "--mu", "0.5",
                   "--cells", "160", "--outdir", d])
    assert rc == 3
    assert os.path.exists(os.path.join(d, "FAILED"))
    # the failing run still leaves a report describing what broke
    report = _read_json(os.path.join(d, "report.json"))
    assert report["positivity"] is not None
    rc = cli.main(["solve", "--symbols", "10", "--mu", "800",
                   "--cells", "160", "--outdir", d])
    assert rc == 0
    assert not os.path.exists(os.path.join(d, "FAILED"))


def test_reproducible_artifacts(tmp_path):
    args = ["solve", "--symbols", "10", "--mu", "600", "--cells", "160"]
    da, db = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(args + ["--outdir", da]) == 0
    assert cli.main(args + ["--outdir", db]) == 0
    with open(os.path.join(da, "sol.csv"), "rb") as f:
        bytes_a = f.read()
    with open(os.path.join(db, "sol.csv"), "rb") as f:
        bytes_b = f.read()
    assert bytes_a == bytes_b
    ma = _read_json(os.path.join(da, "manifest.json"))
    mb = _read_json(os.path.join(db, "manifest.json"))
    assert ma["manifest_hash"] == mb["manifest_hash"]
    assert ma["outputs"] == mb["outputs"]


def test_flags_beat_config(tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"mu": 500.0, "cells": 160,
                                    "symbols": "10"}))
    d = str(tmp_path / "out")
    rc = cli.main(["solve", "--config", str(cfg_path), "--mu", "800",
                   "--outdir", d])
    assert rc == 0
    manifest = _read_json(os.path.join(d, "manifest.json"))
    assert manifest["config"]["mu"] == 800.0
    assert manifest["config"]["cells"] == 160
    report = _read_json(os.path.join(d, "report.json"))
    assert report["mu"] == 800.0


def test_oracle_ground(tmp_path, capsys):
    rc = cli.main(["oracle", "ground", "--rtol", "1e-10",
                   "--outdir", str(tmp_path)])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(payload["c"] - C_STEP) < 1e-6 * C_STEP


def test_oracle_integrate_csv(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["oracle", "integrate", "--mu", "1", "--t0", "0",
                   "--t1", "1", "--u0", "0", "--du0", "1",
                   "--samples", "50", "--out", "ivp.csv", "--outdir", d])
    assert rc == 0
    data = np.genfromtxt(os.path.join(d, "ivp.csv"), delimiter=",",
                         names=True)
    assert len(data) == 50
    assert data["u"][0] == 0.0


def test_connection_report(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["connection", "--mu", "2000", "--x", "0.6", "--y", "0.4",
                   "--cells", "160", "--outdir", d])
    assert rc == 0
    rep = _read_json(os.path.join(d, "connection.json"))
    dlo, dhi = rep["slopes"]
    assert dlo < 0.0 and dhi > 0.0
    assert rep["zeros"] == []
    signs = rep["sensitivity_signs"]
    assert all(signs.values())
    assert max(rep["fd_checks"]["rel_err"]) < 1e-5
    assert all(mk > 0.0 and mr > 0.0 for mk, mr in rep["cap_margins"])


def test_connection_interiority_exit_code(tmp_path):
    rc = cli.main(["connection", "--mu", "0.05", "--x", "2.0", "--y", "2.0",
                   "--cells", "120", "--outdir", str(tmp_path)])
    assert rc == 3
    assert os.path.exists(tmp_path / "FAILED")


def test_sweep_artifacts(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["sweep", "--codes", "1,10", "--mu-from", "100",
                   "--mu-to", "1000", "--points", "3", "--cells", "160",
                   "--jobs", "2", "--outdir", d])
    assert rc == 0
    for name in ("aggregate.csv", "brackets.csv", "decay_1.csv",
                 "decay_10.csv", "fits.json", "plot.gp", "manifest.json"):
        assert os.path.exists(os.path.join(d, name)), name
    decay = np.genfromtxt(os.path.join(d, "decay_10.csv"), delimiter=",",
                          names=True)
    assert np.all(np.diff(decay["interior_sup"]) < 0.0)
    brackets = np.genfromtxt(os.path.join(d, "brackets.csv"), delimiter=",",
                             names=True, dtype=None, encoding="utf-8")
    assert len(brackets) == 2
    fits = _read_json(os.path.join(d, "fits.json"))
    assert set(fits) == {"1", "10"}


def test_verify_report(tmp_path):
    d = str(tmp_path)
    rc = cli.main(["verify", "--symbols", "10", "--mu-from", "200",
                   "--mu-to", "2000", "--points", "3", "--cells", "200",
                   "--outdir", d])
    assert rc == 0
    rep = _read_json(os.path.join(d, "verify.json"))
    assert rep["sweep"]["symbols"] == [1, 0]
    assert rep["identities_at_mu_max"]["iii"] < 1e-12
    assert rep["minimal_period_T"] == 4.0
    assert rep["oracle"]["rel"] < 1e-3
