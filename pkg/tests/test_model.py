import copy

import numpy as np
import pytest
from scipy import stats

from epiflux.errors import BoundError, ConfigError, MomentError, NormalizationError, SchemaError
from epiflux.families import Sigmoid, Tabulated, make_family
from epiflux.model import build_model, config_digest, eval_gamma, eval_lambda, sample_initial, \
    sample_new_trait, save_config

from conftest import raw_config


def test_two_trait_kernel_accepted(models):
    m = models["modelB2"]
    np.testing.assert_allclose(m.kernel @ m.weights, [1.0, 1.0], atol=1e-12)
    assert m.kappa_bar == pytest.approx(1.5, abs=1e-14)


def test_identity_kernel_kappa_one(models):
    assert models["modelB"].kappa_bar == pytest.approx(1.0)


def test_gamma_above_one_rejected():
    cfg = raw_config("modelA")
    cfg["gamma"] = {"family": "constant", "value": 1.5}
    with pytest.raises(BoundError):
        build_model(cfg)


def test_lambda_above_bound_rejected():
    cfg = raw_config("modelA")
    cfg["bounds"]["lambda_star"] = 0.4
    with pytest.raises(BoundError):
        build_model(cfg)


def test_kernel_row_sum_reports_row():
    cfg = raw_config("modelB2")
    cfg["kernel"] = {"matrix": [[1.6, 0.4], [0.56, 1.4]]}
    with pytest.raises(NormalizationError) as exc:
        build_model(cfg)
    assert exc.value.row == 1


def test_kernel_renormalize_flag():
    cfg = raw_config("modelB2")
    cfg["kernel"] = {"matrix": [[1.6, 0.4], [0.56, 1.4]], "renormalize": True}
    m = build_model(cfg)
    np.testing.assert_allclose(m.kernel @ m.weights, 1.0, atol=1e-12)


@pytest.mark.parametrize("section", ["traits", "lambda", "gamma", "kernel", "initial", "bounds"])
def test_missing_section_named(section):
    cfg = raw_config("modelB")
    del cfg[section]
    with pytest.raises(SchemaError, match=section):
        build_model(cfg)


def test_heavy_tail_initial_moment():
    cfg = raw_config("modelB")
    cfg["initial"] = {"age": {"family": "lomax", "shape": 1.5, "scale": 1.0}}
    cfg["bounds"]["alpha"] = 1.0
    with pytest.raises(MomentError):
        build_model(cfg)
    cfg["initial"] = {"age": {"family": "lomax", "shape": 3.0, "scale": 1.0}}
    build_model(cfg)


def test_unknown_family():
    cfg = raw_config("modelB")
    cfg["lambda"] = {"family": "cubic"}
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_eval_examples(models):
    assert eval_lambda(models["modelA"], 3.2, 0) == pytest.approx(0.5)
    mB = models["modelB"]
    assert eval_lambda(mB, 0.5, 0) == 2.0 and eval_lambda(mB, 1.5, 0) == 0.0
    assert eval_gamma(mB, 1.9, 0) == 0.0 and eval_gamma(mB, 2.0, 0) == 1.0
    assert eval_gamma(models["gamma-zero"], 7.0, 0) == 0.0
    with pytest.raises(IndexError):
        eval_lambda(mB, 1.0, 3)


def test_left_limits_at_breakpoints(models):
    mB = models["modelB"]
    assert mB.eval_lambda(np.array([1.0]), 0, "left")[0] == 2.0
    assert mB.eval_gamma(np.array([2.0]), 0, "left")[0] == 0.0


def test_tabulated_interpolates():
    f = Tabulated([0.0, 1.0, 3.0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(f(np.array([0.5, 2.0, 5.0])), [0.5, 0.5, 0.0])
    assert make_family({"family": "tabulated", "ages": [0, 1, 3], "values": [0, 1, 0]}) == f


def test_sigmoid_monotone_inside_unit_interval():
    f = Sigmoid(midpoint=2.0, slope=4.0, low=0.0, high=1.0)
    v = f(np.linspace(0, 6, 200))
    assert np.all((v > 0) & (v < 1)) and np.all(np.diff(v) > 0)


def test_sample_initial_mean(models, rng):
    ages, traits = sample_initial(models["modelB"], 100_000, rng)
    assert abs(ages.mean() - 1.0) < 4e-2 / np.sqrt(10)  # 4 standard errors of Exp(1)
    assert np.all(traits == 0)


def test_degenerate_trait_probs():
    cfg = raw_config("modelB2")
    cfg["initial"]["trait_probs"] = [1.0, 0.0]
    _, tr = sample_initial(build_model(cfg), 1000, np.random.default_rng(0))
    assert np.all(tr == 0)


def test_sample_initial_deterministic(models):
    a = sample_initial(models["modelB2"], 50, np.random.default_rng(7))
    b = sample_initial(models["modelB2"], 50, np.random.default_rng(7))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_sample_new_trait_frequencies(models):
    m = models["modelB2"]
    draws = sample_new_trait(m, 0, np.random.default_rng(3), size=100_000)
    p = np.mean(draws == 0)
    assert abs(p - 0.8) < 3 * np.sqrt(0.8 * 0.2 / 100_000)
    counts = np.bincount(sample_new_trait(m, 1, np.random.default_rng(4), size=100_000), minlength=2)
    assert stats.chisquare(counts, 100_000 * np.array([0.3, 0.7])).pvalue > 1e-3


def test_identity_kernel_new_trait(models):
    assert np.all(sample_new_trait(models["modelB"], 0, np.random.default_rng(1), size=100) == 0)


def test_memoryless_kernel_same_law():
    cfg = raw_config("modelB2")
    cfg["kernel"] = {"matrix": [[0.5, 1.5], [0.5, 1.5]]}
    m = build_model(cfg)
    a = np.bincount(sample_new_trait(m, 0, np.random.default_rng(1), size=100_000), minlength=2)
    b = np.bincount(sample_new_trait(m, 1, np.random.default_rng(2), size=100_000), minlength=2)
    assert stats.chi2_contingency(np.stack([a, b]))[1] > 1e-3


def test_digest_stable_under_key_order():
    cfg = raw_config("modelB2")
    shuffled = {k: cfg[k] for k in reversed(list(cfg))}
    assert build_model(cfg).digest == build_model(shuffled).digest
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})


def test_roundtrip_idempotent(models, tmp_path):
    for name in ("modelB2", "gamma-zero"):
        m = models[name]
        save_config(m.config, tmp_path / "m.toml")
        m2 = build_model(tmp_path / "m.toml")
        assert m2.digest == m.digest
        assert np.array_equal(m2.kernel, m.kernel) and np.array_equal(m2.trait_probs, m.trait_probs)


def test_run_section_ignored_by_digest(models):
    cfg = raw_config("modelB")
    cfg["run"] = {"horizon": 4.0}
    assert build_model(cfg).digest == models["modelB"].digest


def test_kernel_from_file(tmp_path):
    (tmp_path / "k.txt").write_text("1.6 0.4\n0.6 1.4\n")
    cfg = raw_config("modelB2")
    cfg["kernel"] = {"file": "k.txt"}
    cfg["_base_dir"] = str(tmp_path)
    assert build_model(cfg).kappa_bar == pytest.approx(1.5)


def test_probe_bounds_property(models):
    for m in models.values():
        a = np.linspace(0, m.probe_max, 501)
        for j in range(m.n_traits):
            lam = m.eval_lambda(a, j)
            gam = m.eval_gamma(a, j)
            assert np.all((lam >= 0) & (lam <= m.lambda_star))
            assert np.all((gam >= 0) & (gam <= 1))
