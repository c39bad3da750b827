import os
import subprocess
import sys

import numpy as np
import pytest

from epiflux import simulate, simulate_coupled
from epiflux.kernels import available_backends, backend_name, get_backend

compiled = pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")


def _backend_in_subprocess(**env):
    e = dict(os.environ)
    e.pop("EPIFLUX_PURE_PYTHON", None)
    e.update(env)
    r = subprocess.run([sys.executable, "-c", "from epiflux import backend_name; print(backend_name())"],
                       capture_output=True, text=True, env=e, check=True)
    return r.stdout.strip()


def test_env_forces_fallback():
    assert _backend_in_subprocess(EPIFLUX_PURE_PYTHON="1") == "python"


@compiled
def test_compiled_is_default():
    assert _backend_in_subprocess() == "compiled"


def test_get_backend(monkeypatch):
    monkeypatch.setenv("EPIFLUX_PURE_PYTHON", "1")
    assert backend_name() == "python"
    assert backend_name(get_backend("python")) == "python"
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_fallback_runs_simulation(models, monkeypatch):
    monkeypatch.setenv("EPIFLUX_PURE_PYTHON", "1")
    sim = simulate(models["modelB2"], 100, 2.0, seed=1)
    assert sim.backend == "python" and sim.n_events > 0


@compiled
@pytest.mark.parametrize("name", ["modelB", "modelB2", "smooth"])
def test_backends_agree_on_coupling(models, lln_cache, name):
    m = models[name]
    lln = lln_cache(name, 3.0, 0.01)
    a = simulate_coupled(m, 200, 3.0, 5, lln, backend="compiled")
    b = simulate_coupled(m, 200, 3.0, 5, lln, backend="python")
    np.testing.assert_array_equal(a.sup_dA, b.sup_dA)
    np.testing.assert_array_equal(a.sup_da, b.sup_da)
    np.testing.assert_array_equal(a.count, b.count)
