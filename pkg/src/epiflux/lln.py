"""Deterministic large-population limit.

Along characteristics the density is a transported initial cohort plus cohorts
born at rate ``F(s) S(s, theta) w_theta``; substituting into the definitions of
``F`` and ``S`` gives a closed Volterra system in time, solved here by marching
on a uniform grid with a short Picard iteration per step.  Ages live on the
same grid, so breakpoints of the rate families that sit on grid nodes are
handled by one-sided values and cost no accuracy.

Densities are taken with respect to ``da nu(dtheta)`` (``nu`` = trait weights).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GridError, NonConvergence
from .initial import Empirical
from .model import ModelSpec
from .quadrature import panel_weights

INIT_TAIL = 1e-12


def _n_steps(T, dt):
    if dt <= 0 or T <= 0:
        raise GridError("need dt > 0 and T > 0")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise GridError(f"horizon {T} is not a multiple of dt = {dt}")
    return n


class CohortGrid:
    """Age tables and initial-cohort quadrature shared by the limit and fluctuation solvers."""

    def __init__(self, model: ModelSpec, T: float, dt: float):
        self.model = model
        self.dt = float(dt)
        self.Nt = _n_steps(T, dt)
        self.T = self.Nt * self.dt
        self.J = model.n_traits
        self._initial_weights()
        L = self.nA + self.Nt + 1
        ages = np.arange(L) * self.dt
        self.ages = ages
        self.lamR = np.array([f(ages, "right") for f in model.lam])
        self.lamL = np.array([f(ages, "left") for f in model.lam])
        self.gamR = np.array([f(ages, "right") for f in model.gamma])
        self.gamL = np.array([f(ages, "left") for f in model.gamma])
        self.K = model.kernel
        self.w = model.weights

    def _initial_weights(self):
        law, dt, J = self.model.age_law, self.dt, self.model.n_traits
        p = np.asarray(self.model.trait_probs, dtype=float)
        if isinstance(law, Empirical):
            # atoms are snapped to the nearest grid age
            idx = np.rint(law.ages / dt).astype(np.int64)
            nA = int(idx.max()) + 1
            wR = np.zeros((J, nA + 1))
            if law.traits is None:
                cnt = np.bincount(idx, minlength=nA + 1).astype(float) / idx.size
                wR[:] = p[:, None] * cnt[None, :]
            else:
                np.add.at(wR, (law.traits, idx), 1.0 / idx.size)
            wL = np.zeros_like(wR)
        else:
            nA = max(1, int(math.ceil(law.truncation(INIT_TAIL) / dt - 1e-9)))
            a = np.arange(nA + 1) * dt
            fR = np.asarray(law.pdf(a, "right"), dtype=float)
            fL = np.asarray(law.pdf(a, "left"), dtype=float)
            fR[nA] = 0.0
            fL[0] = 0.0
            if not np.isfinite(fR[0]):
                # integrable singularity at age 0: give the first panel its exact mass
                fR[0] = 2.0 * (1.0 - law.sf(dt)) / dt - fL[1]
            wR = 0.5 * dt * p[:, None] * fR[None, :]
            wL = 0.5 * dt * p[:, None] * fL[None, :]
        total = wR.sum() + wL.sum()
        self.nA = nA
        self.a_max = nA * dt
        self.init_mass_raw = float(total)
        self.wR = wR / total
        self.wL = wL / total

    # -- shifted views: value at age (i + n) for initial atom i
    def shifted(self, tab, n):
        return tab[:, n:n + self.nA + 1]


@dataclass
class LlnSolution:
    t: np.ndarray
    F: np.ndarray
    S: np.ndarray
    dt: float
    T: float
    residual: float
    model_digest: str
    a_max: float
    iterations: int
    grid: CohortGrid = field(default=None, repr=False, compare=False)

    @property
    def n_steps(self):
        return self.t.size - 1


def _born(beta, phiL, phiR, H, n, dt):
    """``dt * sum_m (p0 w0 + p1 w1)`` over panels m < n for every trait."""
    if n == 0:
        return np.zeros(beta.shape[1])
    m = np.arange(n)
    p0 = beta[:n].T * phiL[:, n - m]
    p1 = beta[1:n + 1].T * phiR[:, n - m - 1]
    w0, w1 = panel_weights(H[:, :n], H[:, 1:n + 1])
    return dt * (p0 * w0 + p1 * w1).sum(axis=1)


def solve_lln(model: ModelSpec, T: float, dt: float, tol: float = 1e-12,
              max_iters: int = 1000) -> LlnSolution:
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = CohortGrid(model, T, dt)
    J, Nt, nA, K, w = g.J, g.Nt, g.nA, g.K, g.w
    F = np.zeros(Nt + 1)
    S = np.zeros((Nt + 1, J))
    beta = np.zeros((Nt + 1, J))
    G0 = np.zeros((J, nA + 1))
    H = np.zeros((J, Nt + 1))

    AL = g.wR * g.shifted(g.lamR, 0) + g.wL * g.shifted(g.lamL, 0)
    AG = g.wR * g.shifted(g.gamR, 0) + g.wL * g.shifted(g.gamL, 0)
    F[0] = AL.sum()
    S[0] = AG.sum(axis=1) @ K
    beta[0] = w * F[0] * S[0]
    worst, iters_max = 0.0, 0

    for n in range(1, Nt + 1):
        AL = g.wR * g.shifted(g.lamR, n) + g.wL * g.shifted(g.lamL, n)
        AG = g.wR * g.shifted(g.gamR, n) + g.wL * g.shifted(g.gamL, n)
        G0_base = G0 + 0.5 * dt * F[n - 1] * g.gamR[:, n - 1:n + nA]
        G0_add = 0.5 * dt * g.gamL[:, n:n + nA + 1]
        H_base = H.copy()
        H_base[:, :n] += 0.5 * dt * F[n - 1] * g.gamR[:, n - 1::-1][:, :n]
        H_add = np.zeros_like(H)
        H_add[:, :n] = 0.5 * dt * g.gamL[:, n:0:-1]

        Fn, Sn = F[n - 1], S[n - 1].copy()
        for it in range(1, max_iters + 1):
            G0n = G0_base + Fn * G0_add
            Hn = H_base + Fn * H_add
            beta[n] = w * Fn * Sn
            E = np.exp(-G0n)
            born_l = _born(beta, g.lamL, g.lamR, Hn, n, dt)
            born_g = _born(beta, g.gamL, g.gamR, Hn, n, dt)
            F_new = (AL * E).sum() + born_l.sum()
            S_new = ((AG * E).sum(axis=1) + born_g) @ K
            upd = max(abs(F_new - Fn), float(np.max(np.abs(S_new - Sn))))
            Fn, Sn = F_new, S_new
            if upd <= tol:
                break
        else:
            raise NonConvergence(f"Picard iteration stalled at t = {n * dt:.6g}", residual=upd)
        F[n], S[n] = Fn, Sn
        beta[n] = w * Fn * Sn
        G0 = G0_base + Fn * G0_add
        H = H_base + Fn * H_add
        worst = max(worst, upd)
        iters_max = max(iters_max, it)

    return LlnSolution(t=np.arange(Nt + 1) * dt, F=F, S=S, dt=float(dt), T=g.T, residual=worst,
                       model_digest=model.digest, a_max=g.a_max, iterations=iters_max, grid=g)


# ------------------------------------------------------------ global tables


def exponent_tables(g: CohortGrid, F):
    """Cumulative exponents along characteristics for a given ``F`` on the grid.

    ``G0[j, i, n]``: initial atom at age ``i dt``, from time 0 to ``n dt``.
    ``H[j, m, n]``: cohort born at ``m dt``, from ``m dt`` to ``n dt`` (zero for n <= m).
    """
    F = np.asarray(F, dtype=float)
    J, Nt, nA, dt = g.J, g.Nt, g.nA, g.dt
    G0 = np.zeros((J, nA + 1, Nt + 1))
    H = np.zeros((J, Nt + 1, Nt + 1))
    for j in range(J):
        gr = sliding_window_view(g.gamR[j, :nA + Nt], Nt)          # [i, k] -> gamR[i + k]
        gl = sliding_window_view(g.gamL[j, 1:nA + Nt + 1], Nt)     # [i, k] -> gamL[i + k + 1]
        inc = 0.5 * dt * (F[None, :-1] * gr + F[None, 1:] * gl)
        G0[j, :, 1:] = np.cumsum(inc, axis=1)
        # lag l = k - m: increment dt/2 (F[m+l] gamR[l] + F[m+l+1] gamL[l+1])
        for m in range(Nt):
            lag = np.arange(Nt - m)
            inc = 0.5 * dt * (F[m + lag] * g.gamR[j, lag] + F[m + lag + 1] * g.gamL[j, lag + 1])
            H[j, m, m + 1:] = np.cumsum(inc)
    return G0, H


def lln_residual(sol: LlnSolution, model: ModelSpec) -> dict:
    """Recompute both right-hand sides from the stored ``(F, S)`` in one vectorized pass."""
    g = sol.grid if sol.grid is not None else CohortGrid(model, sol.T, sol.dt)
    F, S = np.asarray(sol.F, float), np.asarray(sol.S, float)
    J, Nt, nA, dt = g.J, g.Nt, g.nA, g.dt
    G0, H = exponent_tables(g, F)
    beta = g.w[None, :] * F[:, None] * S
    idx = np.arange(nA + 1)[:, None] + np.arange(Nt + 1)[None, :]    # [i, n] -> i + n
    m = np.arange(Nt)[:, None]
    n = np.arange(Nt + 1)[None, :]
    valid = m < n
    lag0 = np.where(valid, n - m, 0)
    lag1 = np.where(valid, n - m - 1, 0)
    rhs_F = np.zeros(Nt + 1)
    parts_S = np.zeros((Nt + 1, J))
    for j in range(J):
        E = np.exp(-G0[j])
        w0, w1 = panel_weights(H[j, :-1, :], H[j, 1:, :])
        w0 = np.where(valid, w0, 0.0)
        w1 = np.where(valid, w1, 0.0)
        for phiR, phiL, target in ((g.lamR[j], g.lamL[j], "F"), (g.gamR[j], g.gamL[j], "S")):
            init = (g.wR[j][:, None] * phiR[idx] + g.wL[j][:, None] * phiL[idx]) * E
            born = dt * (beta[:-1, j, None] * phiL[lag0] * w0 + beta[1:, j, None] * phiR[lag1] * w1)
            tot = init.sum(axis=0) + born.sum(axis=0)
            if target == "F":
                rhs_F += tot
            else:
                parts_S[:, j] = tot
    rhs_S = parts_S @ g.K
    dF = np.abs(rhs_F - F)
    dS = np.abs(rhs_S - S)
    return {"F": float(dF.max()), "S": float(dS.max()), "max": float(max(dF.max(), dS.max())),
            "F_pointwise": dF, "S_pointwise": dS.max(axis=1)}


def mass(sol: LlnSolution, model: ModelSpec = None):
    """Total mass of the discrete limit measure at each grid time."""
    g = sol.grid if sol.grid is not None else CohortGrid(model, sol.T, sol.dt)
    G0, H = exponent_tables(g, sol.F)
    beta = g.w[None, :] * sol.F[:, None] * sol.S
    out = np.zeros(g.Nt + 1)
    for n in range(g.Nt + 1):
        out[n] = (np.exp(-G0[:, :, n]) * (g.wR + g.wL)).sum()
        if n:
            w0, w1 = panel_weights(H[:, :n, n], H[:, 1:n + 1, n])
            out[n] += g.dt * (beta[:n].T * w0 + beta[1:n + 1].T * w1).sum()
    return out


# ------------------------------------------------------------------- density


def _interp(sol, t):
    return np.interp(t, sol.t, sol.F), np.array([np.interp(t, sol.t, sol.S[:, j]) for j in range(sol.S.shape[1])])


def _exponent(sol, model, j, a_start, s_lo, s_hi):
    """``int_{s_lo}^{s_hi} F(s) gamma(a_start + s - s_lo, j) ds`` by trapezoid on the stored grid."""
    if s_hi <= s_lo:
        return 0.0
    inner = sol.t[(sol.t > s_lo + 1e-12) & (sol.t < s_hi - 1e-12)]
    s = np.concatenate(([s_lo], inner, [s_hi]))
    Fs = np.interp(s, sol.t, sol.F)
    ages = a_start + s - s_lo
    gr = model.eval_gamma(ages[:-1], j, "right")
    gl = model.eval_gamma(ages[1:], j, "left")
    return float(0.5 * np.sum(np.diff(s) * (Fs[:-1] * gr + Fs[1:] * gl)))


def density(sol: LlnSolution, model: ModelSpec, t: float, a, j: int, side: str = "right"):
    """Limit density ``u_t(a, theta_j)`` with respect to ``da nu(dtheta)``.

    ``side`` selects the one-sided value in ``a`` where the density jumps.
    """
    if t < -1e-12 or t > sol.T + 1e-9:
        raise GridError(f"time {t} outside the solved horizon [0, {sol.T}]")
    if not 0 <= int(j) < model.n_traits:
        raise IndexError(f"trait index {j} out of range")
    scalar = np.ndim(a) == 0
    a = np.atleast_1d(np.asarray(a, dtype=float))
    out = np.empty(a.size)
    wj = model.weights[j]
    pj = model.trait_probs[j]
    law = model.age_law
    for q, x in enumerate(a):
        if x < 0:
            out[q] = 0.0
        elif x > t or (x == t and side == "right"):
            a0 = x - t
            if isinstance(law, Empirical):
                raise GridError("pointwise density is undefined for an atomic initial law")
            f0 = float(law.pdf(a0, side)) * pj / wj
            out[q] = f0 * math.exp(-_exponent(sol, model, j, a0, 0.0, t))
        else:
            s = t - x
            Fs, Ss = _interp(sol, s)
            out[q] = Fs * Ss[j] * math.exp(-_exponent(sol, model, j, 0.0, s, t))
    return float(out[0]) if scalar else out


def write_lln_csv(sol: LlnSolution, path) -> None:
    J = sol.S.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "F"] + [f"S_{j}" for j in range(J)])
        for i in range(sol.t.size):
            wr.writerow([repr(float(sol.t[i])), repr(float(sol.F[i]))] + [repr(float(v)) for v in sol.S[i]])
