import dataclasses
import json

import numpy as np
import pytest

from epiflux import TestFunctional, simulate
from epiflux.errors import ConfigError, EventLogMissing
from epiflux.verification import (
    clt_check, coupling_bound, coupling_check, lln_convergence, qv_check, qv_study, solver_check,
    write_report,
)

N_LIST = [250, 500, 1000, 2000, 4000]


def test_lln_convergence_model_a_degenerate(models):
    rep = lln_convergence(models["modelA"], N_LIST, reps=3, T=4.0, seed=1)
    assert rep.degenerate and rep.reason == "degenerate: constant λ"
    assert np.all(rep.mean_err < 1e-12) and np.isnan(rep.slope)
    assert rep.passed


def test_lln_convergence_gamma_zero_slope(models):
    # no reinfections: the error is the empirical-process deviation of the transported initial ages
    rep = lln_convergence(models["gamma-zero"], N_LIST, reps=20, T=8.0, seed=2)
    assert not rep.degenerate
    assert -0.65 <= rep.slope <= -0.35, rep.summary()
    assert rep.passed


def test_lln_convergence_arguments(models):
    with pytest.raises(ConfigError):
        lln_convergence(models["modelB"], [100, 200, 400], reps=2, T=1.0)
    with pytest.raises(ConfigError):
        lln_convergence(models["modelB"], [100, 1000], reps=2, T=1.0)
    with pytest.raises(ConfigError):
        lln_convergence(models["modelB"], [100, 300, 1000], reps=1, T=1.0)


def test_clt_model_a_degenerate(models):
    rep = clt_check(models["modelA"], 200, 100, (1.0, 2.0), seed=0, n_limit=20)
    assert rep.degenerate and rep.passed


def test_clt_needs_reps(models):
    with pytest.raises(ConfigError):
        clt_check(models["modelB"], 200, 99, (1.0,))


def test_qv_constant_functional_zero(models):
    m = models["modelB"]
    sim = simulate(m, 300, 3.0, seed=4)
    assert sim.n_events > 0
    rep = qv_check(sim, m, TestFunctional.constant(2.0), n_quad=200)
    vals = {r["metric"]: r["value"] for r in rep.rows}
    assert vals["realized"] == 0.0 and vals["compensator"] == 0.0
    assert rep.degenerate and rep.passed


def test_qv_gamma_zero(models):
    m = models["gamma-zero"]
    sim = simulate(m, 300, 3.0, seed=4)
    rep = qv_check(sim, m, TestFunctional.from_lambda(m), n_quad=200)
    vals = {r["metric"]: r["value"] for r in rep.rows}
    assert sim.n_events == 0 and vals["realized"] == 0.0 and vals["compensator"] == 0.0
    assert rep.degenerate


def test_qv_errors(models):
    m = models["modelB"]
    sim = simulate(m, 100, 1.0, seed=0)
    with pytest.raises(EventLogMissing):
        qv_check(dataclasses.replace(sim, ev_time=None), m, TestFunctional.from_lambda(m))
    with pytest.raises(EventLogMissing):
        qv_check(None, m, TestFunctional.from_lambda(m))
    with pytest.raises(ConfigError):
        qv_check(sim, models["modelB2"], TestFunctional.from_lambda(m))


def test_qv_small_study(models):
    rep = qv_study(models["modelB"], 1000, 4.0, runs=4, seed=3, n_quad=1000)
    vals = {r["metric"]: r["value"] for r in rep.rows}
    assert 0.8 <= vals["min_ratio"] <= vals["max_ratio"] <= 1.25
    assert np.isfinite(vals["mean_z"])


@pytest.mark.parametrize("name", ["modelA", "gamma-zero"])
def test_coupling_degenerate(models, lln_cache, name):
    rep = coupling_check(models[name], [100, 400], reps=2, T=2.0, seed=0, lln=lln_cache(name, 2.0, 0.01))
    vals = {r["metric"]: r["value"] for r in rep.rows}
    assert all(v == 0.0 for k, v in vals.items() if k.startswith("mean_"))
    assert rep.degenerate and rep.passed


def test_coupling_small_run_respects_bound(models, lln_cache):
    m = models["modelB"]
    rep = coupling_check(m, 300, reps=2, T=2.0, seed=1, lln=lln_cache("modelB", 2.0, 0.01))
    assert rep.passed
    assert coupling_bound(m, 400, 2.0) == pytest.approx(coupling_bound(m, 100, 2.0) / 2)


def test_solver_check_small(models):
    rep = solver_check(models["modelB"], T=2.0, zero_mass_n=60)
    assert rep.passed, rep.summary()


def test_write_report(models, tmp_path):
    rep = lln_convergence(models["modelA"], [100, 300, 1000], reps=2, T=1.0, seed=5)
    paths = write_report(rep, tmp_path)
    assert [p.name for p in paths] == ["report.csv", "summary.txt", "report_params.json"]
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "check,metric,value,threshold,passed" and len(lines) == 1 + len(rep.rows)
    par = json.loads((tmp_path / "report_params.json").read_text())
    assert par["params"]["seed"] == 5 and par["params"]["model_digest"] == models["modelA"].digest
    assert par["degenerate"] is True
    assert (tmp_path / "summary.txt").read_text().startswith("lln_convergence: PASS")
