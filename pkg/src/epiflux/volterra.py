"""Linear Volterra system for the fluctuations of the force of infection and of
the mean susceptibilities, and reconstruction of other fluctuation functionals.

For a functional ``phi`` the fluctuation satisfies, on the grid,

    <u_n, phi> = N_n(phi) + sum_{m<=n} cF_phi[n, m] hF[m] + sum_{m<=n, j} cS_phi[n, m, j] hS[m, j],

with ``N = M01 - M02 + M1 - M2``.  Taking ``phi = lambda`` and ``phi = gamma K[.][i]``
closes the system in ``(hF, hS)``; the ``m = n`` terms are solved implicitly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, MissingFunctional, SingularStep
from .gaussian import GaussianSampleBatch, NoiseKernels, default_functionals, sample_gaussian
from .lln import LlnSolution
from .model import ModelSpec

COND_MAX = 1e12


@dataclass
class FluctuationSolution:
    t: np.ndarray
    hF: np.ndarray          # [r, n]
    hS: np.ndarray          # [r, n, j]
    noise_seed: int = None
    info: dict = field(default_factory=dict)

    @property
    def n_replicates(self):
        return self.hF.shape[0]


def _rows(kernels: NoiseKernels, J: int):
    labels = ["lambda"] + [f"gammaK_{i}" for i in range(J)]
    missing = [lab for lab in labels if lab not in kernels.labels]
    if missing:
        raise MissingFunctional(f"noise batch lacks the functionals {missing}")
    return [kernels.labels.index(lab) for lab in labels]


def system_matrix(kernels: NoiseKernels):
    """``C[n, m, r, c]``: row functional ``r`` (lambda, gammaK_i), unknown ``c`` (hF, hS_j)."""
    J, Nt = kernels.J, kernels.Nt
    rows = _rows(kernels, J)
    C = np.zeros((Nt + 1, Nt + 1, J + 1, J + 1))
    for r, f in enumerate(rows):
        cF, cS = kernels.volterra_coefficients(f)
        C[:, :, r, 0] = cF
        C[:, :, r, 1:] = cS
    return C, rows


def _march(C, noise):
    """Solve ``x_n = noise_n + sum_{m<=n} C[n, m] x_m`` for a stack of right-hand sides ``noise[R, n, r]``."""
    Nt1, _, d, _ = C.shape
    R = noise.shape[0]
    x = np.zeros((R, Nt1, d))
    eye = np.eye(d)
    for n in range(Nt1):
        rhs = noise[:, n, :].copy()
        if n:
            rhs += np.einsum("mrc,Rmc->Rr", C[n, :n], x[:, :n])
        A = eye - C[n, n]
        if not np.all(np.isfinite(A)) or np.linalg.cond(A) > COND_MAX:
            raise SingularStep(f"implicit step matrix is singular at step {n}", step=n)
        x[:, n, :] = np.linalg.solve(A, rhs.T).T
    return x


def _check(model, lln, noise: GaussianSampleBatch):
    k = noise.kernels
    if k is None:
        raise GridMismatch("noise batch carries no kernel information")
    if k.model.digest != model.digest or abs(k.dt - lln.dt) > 1e-12 or k.Nt != lln.n_steps:
        raise GridMismatch("noise batch was generated for a different model or grid")
    if noise.grid_index is None or noise.grid_index.size != k.Nt + 1:
        raise GridMismatch("noise must be sampled on the full solver grid")
    return k


def solve_fluctuation(model: ModelSpec, lln: LlnSolution, noise: GaussianSampleBatch) -> FluctuationSolution:
    """Solve for every replicate in the batch (vectorized)."""
    k = _check(model, lln, noise)
    C, rows = system_matrix(k)
    N = noise.noise()[:, rows, :]                     # [R, r, n]
    x = _march(C, np.transpose(N, (0, 2, 1)))
    return FluctuationSolution(k.t.copy(), x[:, :, 0], x[:, :, 1:], noise.seed,
                               {"literal": k.literal, "n": noise.n})


def linear_map(kernels: NoiseKernels):
    """Matrix ``G`` with ``x = G @ noise`` where both are flattened as [component, time]."""
    C, rows = system_matrix(kernels)
    Nt1, d = kernels.Nt + 1, kernels.J + 1
    eye = np.eye(d * Nt1).reshape(d * Nt1, d, Nt1)       # unit noise per (row, time)
    x = _march(C, np.transpose(eye, (0, 2, 1)))           # [unit, n, c]
    return np.transpose(x, (2, 1, 0)).reshape(d * Nt1, d * Nt1), rows


def exact_covariance(kernels: NoiseKernels):
    """Covariance of (hF, hS) over the grid implied by the noise covariance, shape ``(d, Nt+1, d, Nt+1)``."""
    G, rows = linear_map(kernels)
    Nt1, d = kernels.Nt + 1, kernels.J + 1
    CN = kernels.noise_covariance()
    nf = len(kernels.labels)
    sel = np.concatenate([np.arange(f * Nt1, (f + 1) * Nt1) for f in rows])
    CN = CN[np.ix_(sel, sel)]
    return (G @ CN @ G.T).reshape(d, Nt1, d, Nt1)


@dataclass
class FluctuationMoments:
    t: np.ndarray
    cov_hF: np.ndarray
    se_cov_hF: np.ndarray
    var_hS: np.ndarray
    se_var_hS: np.ndarray
    n: int
    seed: int
    exact_cov_hF: np.ndarray = None
    exact_var_hS: np.ndarray = None


def _cov_se(X):
    """Mean-zero covariance estimate and its standard error for Gaussian rows ``X[r, :]``."""
    n = X.shape[0]
    C = X.T @ X / n
    d = np.diag(C)
    se = np.sqrt((np.outer(d, d) + C**2) / n)
    return C, se


def fluctuation_moments(model: ModelSpec, lln: LlnSolution, grid=None, n: int = 1000, seed: int = 0,
                        literal: bool = False, kernels: NoiseKernels = None) -> FluctuationMoments:
    if n < 2:
        raise ValueError("need at least two replicates")
    if kernels is None:
        kernels = NoiseKernels(model, lln, default_functionals(model), literal=literal)
    batch = sample_gaussian(model, lln, kernels.functionals, n=n, seed=seed, kernels=kernels)
    sol = solve_fluctuation(model, lln, batch)
    idx = np.arange(kernels.Nt + 1) if grid is None else np.array(
        [int(round(t / kernels.dt)) for t in grid])
    cov, se = _cov_se(sol.hF[:, idx])
    hS = sol.hS[:, idx, :]
    var_hS = (hS**2).mean(axis=0)
    se_hS = np.sqrt(2.0 / n) * var_hS
    ex = exact_covariance(kernels)
    return FluctuationMoments(kernels.t[idx], cov, se, var_hS, se_hS, n, seed,
                              ex[0, :, 0, :][np.ix_(idx, idx)],
                              np.stack([np.diag(ex[1 + j, :, 1 + j, :])[idx] for j in range(kernels.J)], axis=1))


def hat_u_functional(model: ModelSpec, lln: LlnSolution, sol: FluctuationSolution,
                     noise: GaussianSampleBatch, phi, t: float):
    """``<u_t, phi>`` per replicate; ``phi`` must be one of the batch's functionals."""
    k = _check(model, lln, noise)
    f = noise.index(phi)
    n = int(round(t / k.dt))
    if abs(n * k.dt - t) > 1e-9 * max(1.0, t) or not 0 <= n <= k.Nt:
        raise GridMismatch(f"time {t} is not on the solver grid")
    cF, cS = k.volterra_coefficients(f)
    val = noise.noise()[:, f, n] + sol.hF[:, :n + 1] @ cF[n, :n + 1] \
        + np.einsum("rmj,mj->r", sol.hS[:, :n + 1, :], cS[n, :n + 1, :])
    return float(val[0]) if val.size == 1 else val


def write_fluct_csv(sol: FluctuationSolution, path) -> None:
    J = sol.hS.shape[2]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["replicate", "t", "hF"] + [f"hS_{j}" for j in range(J)])
        for r in range(sol.n_replicates):
            for i, t in enumerate(sol.t):
                wr.writerow([r, repr(float(t)), repr(float(sol.hF[r, i]))] + [repr(float(v)) for v in sol.hS[r, i]])


def write_moments_csv(mom: FluctuationMoments, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "t2", "cov_hF", "stderr", "exact"])
        for i, t in enumerate(mom.t):
            for k, t2 in enumerate(mom.t):
                ex = "" if mom.exact_cov_hF is None else repr(float(mom.exact_cov_hF[i, k]))
                wr.writerow([repr(float(t)), repr(float(t2)), repr(float(mom.cov_hF[i, k])),
                             repr(float(mom.se_cov_hF[i, k])), ex])
