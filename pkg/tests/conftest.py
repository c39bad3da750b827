from pathlib import Path

import numpy as np
import pytest

from epiflux.lln import solve_lln
from epiflux.model import build_model, load_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = Path(__file__).resolve().parent / "data"


def config_path(name):
    p = CONFIGS / f"{name}.toml"
    return p if p.exists() else DATA / f"{name}.toml"


def raw_config(name):
    return load_config(config_path(name))


@pytest.fixture(scope="session")
def models():
    return {n: build_model(config_path(n)) for n in ("modelA", "modelB", "modelB2", "gamma-zero", "smooth")}


@pytest.fixture(scope="session")
def lln_cache(models):
    cache = {}

    def get(name, T, dt):
        key = (name, float(T), float(dt))
        if key not in cache:
            cache[key] = solve_lln(models[name], T, dt)
        return cache[key]
    return get


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
