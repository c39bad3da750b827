import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest
import tomli_w

from conftest import config_path, raw_config
from epiflux.cli import main, run, sha256
from epiflux.seeding import resolve_jobs


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_config(tmp_path, cfg, name="m.toml"):
    p = tmp_path / name
    p.write_bytes(tomli_w.dumps({k: v for k, v in cfg.items() if not k.startswith("_")}).encode())
    return p


def test_solve_lln_model_a(tmp_path):
    status, man = run("solve-lln", config_path("modelA"), tmp_path, horizon=3.0)
    assert status == 0
    F = np.array([float(r["F"]) for r in _rows(tmp_path / "lln.csv")])
    assert F.size == 301 and np.all(np.abs(F - 0.5) < 1e-12)
    assert man.outputs[0]["file"] == "lln.csv"


def test_simulate_gamma_zero(tmp_path):
    status, _ = run("simulate", config_path("gamma-zero"), tmp_path, seed=3, n=200, horizon=2.0)
    assert status == 0
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert lines == ["time,k,trait_before,trait_after,age_at_event"]
    snaps = _rows(tmp_path / "snapshots.csv")
    t = np.array([float(r["t"]) for r in snaps])
    age = np.array([float(r["mean_age"]) for r in snaps])
    np.testing.assert_allclose(age - age[0], t - t[0], atol=1e-12)
    meta = json.loads((tmp_path / "sim_meta.json").read_text())
    assert meta["N"] == 200 and meta["seed"] == 3 and meta["n_events"] == 0


@pytest.mark.parametrize("command,flags", [
    ("simulate", {"n": 300, "horizon": 2.0}),
    ("solve-lln", {"horizon": 2.0, "dt": 0.05}),
    ("sample-gaussian", {"horizon": 1.0, "n": 5}),
    ("solve-fclt", {"horizon": 1.0, "n": 5}),
])
def test_rerun_is_byte_identical(tmp_path, command, flags):
    a, b = tmp_path / "a", tmp_path / "b"
    sa, ma = run(command, config_path("modelB2"), a, seed=7, **flags)
    sb, mb = run(command, config_path("modelB2"), b, seed=7, **flags)
    assert sa == sb == 0
    assert [o["sha256"] for o in ma.outputs] == [o["sha256"] for o in mb.outputs]
    for o in ma.outputs:
        assert (a / o["file"]).read_bytes() == (b / o["file"]).read_bytes()
        assert o["sha256"] == sha256(a / o["file"])
    man = json.loads((a / "manifest.json").read_text())
    assert man["status"] == "ok" and man["seed"] == 7 and man["model_digest"] == ma.model_digest


def test_seed_changes_output(tmp_path):
    run("simulate", config_path("modelB"), tmp_path / "a", seed=1, n=200, horizon=1.0)
    run("simulate", config_path("modelB"), tmp_path / "b", seed=2, n=200, horizon=1.0)
    assert (tmp_path / "a" / "events.csv").read_bytes() != (tmp_path / "b" / "events.csv").read_bytes()


def test_run_section_in_config(tmp_path):
    cfg = raw_config("modelB")
    cfg["run"] = {"horizon": 1.5, "dt": 0.05, "seed": 11}
    p = _write_config(tmp_path, cfg)
    status, man = run("solve-lln", p, tmp_path / "out")
    assert status == 0 and man.seed == 11 and man.settings["horizon"] == 1.5
    assert len(_rows(tmp_path / "out" / "lln.csv")) == 31
    # explicit flags win over the file
    status, man = run("solve-lln", p, tmp_path / "out2", seed=4, horizon=1.0)
    assert man.seed == 4 and len(_rows(tmp_path / "out2" / "lln.csv")) == 21


def test_unknown_run_key_fails_cleanly(tmp_path):
    cfg = raw_config("modelB")
    cfg["run"] = {"horizn": 1.0}
    status, man = run("solve-lln", _write_config(tmp_path, cfg), tmp_path / "out")
    assert status == 2 and man is None
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["error"] == "ConfigError"
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["error.json"]


def test_error_removes_partial_outputs(tmp_path, monkeypatch):
    import epiflux.cli as cli
    from epiflux.errors import NonConvergence

    def broken(model, s, out):
        (out / "lln.csv").write_text("t,F\n")
        raise NonConvergence("solver gave up")
    monkeypatch.setitem(cli.HANDLERS, "solve-lln", broken)
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    status, _ = run("solve-lln", config_path("modelB"), out)
    assert status == 2
    assert sorted(p.name for p in out.iterdir()) == ["error.json", "keep.txt"]
    assert json.loads((out / "error.json").read_text())["error"] == "NonConvergence"


def test_grid_error_reported(tmp_path):
    status, _ = run("sample-gaussian", config_path("modelB"), tmp_path, horizon=1.0, dt=0.3, n=2)
    assert status == 2
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "GridError"


def test_verify_commands(tmp_path):
    status, _ = run("verify-coupling", config_path("modelA"), tmp_path / "c", n="100,400", reps=2, horizon=1.0)
    assert status == 0
    assert {"report.csv", "summary.txt", "report_params.json", "manifest.json"} <= \
        {p.name for p in (tmp_path / "c").iterdir()}
    status, _ = run("verify-qv", config_path("modelB"), tmp_path / "q", n=300, reps=2, horizon=2.0)
    assert status in (0, 1)
    assert (tmp_path / "q" / "report.csv").exists()


def test_validate_ok(capsys):
    assert main(["validate", str(config_path("modelB"))]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK") and "kappa_bar=1" in out and "[kernel]" in out


def test_validate_normalization_error(tmp_path, capsys):
    cfg = raw_config("modelB2")
    cfg["kernel"]["matrix"] = [[1.6, 0.4], [0.6, 1.36]]          # row 1 integrates to 0.98
    p = _write_config(tmp_path, cfg)
    assert main(["validate", str(p)]) == 2
    err = capsys.readouterr().err
    assert "NormalizationError" in err and "row 1" in err
    cfg["kernel"]["renormalize"] = True
    assert main(["validate", "--quiet", str(_write_config(tmp_path, cfg, "r.toml"))]) == 0


def test_validate_missing_section(tmp_path, capsys):
    cfg = raw_config("modelB")
    del cfg["initial"]
    assert main(["validate", str(_write_config(tmp_path, cfg))]) == 2
    err = capsys.readouterr().err
    assert "SchemaError" in err and "[initial]" in err


def test_main_run_and_jobs_env(tmp_path, monkeypatch):
    monkeypatch.setenv("EPIFLUX_JOBS", "3")
    assert resolve_jobs() == 3 and resolve_jobs(2) == 2
    monkeypatch.setenv("EPIFLUX_JOBS", "")
    assert resolve_jobs() == 1
    with pytest.raises(ValueError):
        resolve_jobs(0)
    rc = main(["run", "simulate", "--config", str(config_path("modelB")), "--out", str(tmp_path),
               "--n", "50", "--horizon", "1", "--quiet"])
    assert rc == 0 and (tmp_path / "manifest.json").exists()


def test_parallel_matches_serial(tmp_path):
    a = run("verify-coupling", config_path("modelB"), tmp_path / "a", n="100,400", reps=2, horizon=1.0, jobs=1)
    b = run("verify-coupling", config_path("modelB"), tmp_path / "b", n="100,400", reps=2, horizon=1.0, jobs=2)
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    assert a[0] == b[0]


def test_console_entry_point(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "epiflux.cli", "validate", "--quiet", str(config_path("modelA"))],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0
