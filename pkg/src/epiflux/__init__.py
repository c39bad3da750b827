"""Age- and trait-structured stochastic epidemics with waning immunity: exact
particle simulation, the deterministic large-population limit and its
Gaussian fluctuations."""

from .errors import *  # noqa: F401,F403
from .functionals import TestFunctional
from .gaussian import NoiseKernels, cov_M, cov_W, sample_gaussian
from .kernels import backend_name
from .lln import LlnSolution, density, lln_residual, solve_lln
from .model import ModelSpec, build_model, load_config
from .simulation import simulate, simulate_coupled
from .volterra import fluctuation_moments, hat_u_functional, solve_fluctuation

__version__ = "0.1.0"

__all__ = [
    "TestFunctional", "NoiseKernels", "cov_M", "cov_W", "sample_gaussian", "backend_name",
    "LlnSolution", "density", "lln_residual", "solve_lln", "ModelSpec", "build_model",
    "load_config", "simulate", "simulate_coupled", "fluctuation_moments", "hat_u_functional",
    "solve_fluctuation", "__version__",
]
