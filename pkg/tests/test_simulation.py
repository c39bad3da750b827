import numpy as np
import pytest
from scipy import integrate, stats

from epiflux.errors import ConfigError, GridError
from epiflux.kernels import available_backends
from epiflux.model import build_model
from epiflux.simulation import (PopulationState, force_of_infection, limit_individual, mean_susceptibility,
                                seed_streams, simulate, simulate_coupled, write_run)

from conftest import raw_config


def test_gamma_zero_pure_drift(models):
    sim = simulate(models["gamma-zero"], 300, 5.0, seed=2)
    assert sim.n_events == 0
    np.testing.assert_array_equal(sim.final.age, sim.initial_age + 5.0)
    np.testing.assert_allclose(sim.mean_age(), sim.initial_age.mean() + sim.snapshot_times, rtol=0, atol=1e-12)


def test_model_a_constant_force_and_poisson_counts(models):
    sim = simulate(models["modelA"], 10_000, 10.0, seed=1)
    assert np.all(sim.F_emp == 0.5)
    mean = sim.final.reinfections.mean()
    assert abs(mean - 5.0) <= 3 * np.sqrt(5.0 / 10_000)


def test_model_b_acceptance_fraction(models):
    """Accepted / candidate ratio vs time-averaged F^N gamma / lambda*, over one long run."""
    m = models["modelB"]
    N, T = 400, 40.0
    grid = np.linspace(0, T, 8001)
    sim = simulate(m, N, T, snapshots=grid, seed=5)
    # per-candidate acceptance probability F^N gamma(a_k) / lambda*; average over candidates
    # equals the time average of F^N <mu^N, gamma> / lambda*
    S = sim.S_emp[:, 0]
    predicted = integrate.trapezoid(sim.F_emp * S, grid) / T / m.lambda_star
    cands = sim.meta["n_candidates"]
    frac = sim.n_events / cands
    se = np.sqrt(frac * (1 - frac) / cands)
    assert abs(frac - predicted) < 3 * se + 2e-3  # quadrature of the snapshot path


def test_force_of_infection_example():
    cfg = raw_config("modelB")
    cfg["lambda"] = {"family": "tabulated", "ages": [0.0, 1.0, 10.0], "values": [0.0, 1.0, 1.0]}
    cfg["bounds"]["lambda_star"] = 1.0
    m = build_model(cfg)
    st = PopulationState(0.0, np.array([0.5, 2.0]), np.array([0, 0]))
    assert force_of_infection(m, st) == pytest.approx(0.75)


def test_force_and_susceptibility_bounds(models, rng):
    for name in ("modelA", "modelB2"):
        m = models[name]
        st = PopulationState(0.0, rng.exponential(2.0, 500), rng.integers(0, m.n_traits, 500))
        assert force_of_infection(m, st) <= m.lambda_star
        S = mean_susceptibility(m, st)
        assert S @ m.weights <= 1 + 1e-12
    st = PopulationState(0.0, np.ones(3), np.zeros(3, dtype=int))
    assert force_of_infection(models["modelA"], st) == 0.5
    assert mean_susceptibility(models["modelA"], st)[0] == 1.0
    assert mean_susceptibility(models["gamma-zero"], st)[0] == 0.0


def test_snapshot_invariants(models):
    m = models["modelB2"]
    sim = simulate(m, 500, 6.0, seed=3, hist_edges=[0, 1, 2, 4, 1e9])
    assert np.all(sim.F_emp <= m.lambda_star)
    assert np.all(sim.age_hist.sum(axis=1) == 500)
    assert np.all(np.diff(sim.ev_time) > 0)
    counts = np.bincount(sim.ev_k, minlength=500)
    assert np.array_equal(counts, sim.final.reinfections)


def test_state_reconstruction_matches_snapshots(models):
    m = models["modelB2"]
    sim = simulate(m, 200, 5.0, snapshots=[0.0, 2.5, 5.0], seed=9)
    for i, t in enumerate(sim.snapshot_times):
        st = sim.state_at(t)
        assert force_of_infection(m, st) == pytest.approx(sim.F_emp[i], abs=1e-12)
        np.testing.assert_allclose(mean_susceptibility(m, st), sim.S_emp[i], atol=1e-12)
    last = sim.state_at(5.0)
    np.testing.assert_allclose(last.age, sim.final.age, atol=1e-12)
    # untouched individuals age at slope one
    a1, a2 = sim.state_at(1.0), sim.state_at(1.5)
    ev = set(sim.ev_k[(sim.ev_time > 1.0) & (sim.ev_time <= 1.5)].tolist())
    keep = np.array([k not in ev for k in range(200)])
    np.testing.assert_allclose(a2.age[keep] - a1.age[keep], 0.5, atol=1e-12)


def test_determinism(models):
    a = simulate(models["modelB2"], 300, 4.0, seed=11)
    b = simulate(models["modelB2"], 300, 4.0, seed=11)
    assert np.array_equal(a.ev_time, b.ev_time) and np.array_equal(a.ev_k, b.ev_k)
    assert np.array_equal(a.ev_to, b.ev_to) and np.array_equal(a.F_emp, b.F_emp)


@pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")
def test_backends_identical_event_logs(models):
    for name in ("modelB", "modelB2"):
        a = simulate(models[name], 250, 6.0, seed=4, backend="compiled")
        b = simulate(models[name], 250, 6.0, seed=4, backend="python")
        assert np.array_equal(a.ev_time, b.ev_time) and np.array_equal(a.ev_k, b.ev_k)
        assert np.array_equal(a.ev_to, b.ev_to)
        np.testing.assert_allclose(a.F_emp, b.F_emp, rtol=0, atol=1e-13)


def test_snapshot_grid_checked(models):
    with pytest.raises(ConfigError):
        simulate(models["modelB"], 10, 2.0, snapshots=[0.0, 3.0])
    with pytest.raises(ConfigError):
        simulate(models["modelB"], 0, 2.0)


def test_limit_individual_poisson(models, lln_cache):
    m = models["modelA"]
    lln = lln_cache("modelA", 10.0, 0.05)
    rng = np.random.Generator(np.random.PCG64(21))
    counts = np.array([limit_individual(m, lln, 10.0, rng).count for _ in range(10_000)])
    assert abs(counts.mean() - 5.0) < 3 * np.sqrt(5.0 / 10_000)


def test_limit_individual_no_jumps_without_susceptibility(models, lln_cache):
    m = models["gamma-zero"]
    path = limit_individual(m, lln_cache("gamma-zero", 4.0, 0.05), 4.0, np.random.default_rng(1), initial=(0.7, 0))
    assert path.count == 0 and path.age(4.0) == pytest.approx(4.7)


def test_limit_individual_first_jump_law(models, lln_cache):
    """First-jump times against the survival law F(t) gamma(a0 + t) exp(-int F gamma)."""
    m = models["smooth"]
    T = 6.0
    lln = lln_cache("smooth", T, 0.01)
    a0 = 0.5
    rng = np.random.Generator(np.random.PCG64(8))
    first = []
    for _ in range(10_000):
        p = limit_individual(m, lln, T, rng, initial=(a0, 0))
        first.append(p.jump_times[0] if p.count else np.inf)
    first = np.array(first)
    t = lln.t
    rate = lln.F * m.eval_gamma(a0 + t, 0)
    H = integrate.cumulative_trapezoid(rate, t, initial=0.0)

    def cdf(x):
        return 1.0 - np.exp(-np.interp(x, t, H))
    finite = first[np.isfinite(first)]
    # conditional law on [0, T]
    p_T = cdf(T)
    assert abs(finite.size / first.size - p_T) < 4 * np.sqrt(p_T * (1 - p_T) / first.size)
    assert stats.kstest(finite, lambda x: cdf(x) / p_T).pvalue > 0.01


def test_coupled_trivial_cases(models, lln_cache):
    c = simulate_coupled(models["modelA"], 500, 5.0, 3, lln_cache("modelA", 5.0, 0.05))
    assert np.all(c.sup_dA == 0) and np.all(c.sup_da == 0)
    c = simulate_coupled(models["gamma-zero"], 200, 5.0, 3, lln_cache("gamma-zero", 5.0, 0.05))
    assert np.all(c.count == 0) and np.all(c.count_lim == 0) and np.all(c.sup_dA == 0)


def test_coupled_shares_interacting_path(models, lln_cache):
    m = models["modelB2"]
    lln = lln_cache("modelB2", 4.0, 0.01)
    c = simulate_coupled(m, 300, 4.0, 6, lln)
    sim = simulate(m, 300, 4.0, seed=6)
    assert np.array_equal(c.count, sim.final.reinfections)


def test_coupled_grid_must_cover_horizon(models, lln_cache):
    with pytest.raises(GridError):
        simulate_coupled(models["modelB"], 10, 5.0, 0, lln_cache("modelB", 4.0, 0.05))


def test_seed_streams_independent():
    a = [g.random() for g in seed_streams(1)]
    assert len(set(a)) == 3
    assert a == [g.random() for g in seed_streams(1)]


def test_write_run(models, tmp_path):
    sim = simulate(models["modelB"], 50, 2.0, seed=1, hist_edges=[0, 1, 5])
    paths = write_run(sim, tmp_path)
    assert [p.name for p in paths] == ["events.csv", "snapshots.csv", "sim_meta.json"]
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert lines[0] == "time,k,trait_before,trait_after,age_at_event" and len(lines) == sim.n_events + 1
    head = (tmp_path / "snapshots.csv").read_text().splitlines()[0]
    assert head == "t,F_emp,S_emp_0,mean_age,hist_0_1,hist_1_5"
