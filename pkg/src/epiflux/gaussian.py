"""Covariance kernels of the limit noise and joint Gaussian sampling.

The discrete limit measure at grid time ``t_m`` is a finite sum of atoms:
initial-age atoms (trapezoid nodes of the initial density, transported) and
born-cohort atoms (the two ends of each birth-time panel).  Every covariance
block is an ``s``-integral (trapezoid on the time grid) of pairings of that
measure with transported test functions, so all blocks, and the deterministic
Volterra coefficients, see the very same discrete measure as the limit solver.

Block names: ``01`` initial sampling, ``02`` removals from the initial cohort,
``1`` births, ``2`` removals from born cohorts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizationError, GridError, GridMismatch, MissingFunctional, UnknownBlock
from .functionals import Rtilde, TestFunctional
from .lln import CohortGrid, LlnSolution, exponent_tables
from .model import ModelSpec
from .quadrature import panel_weights

BLOCKS = ("01", "02", "1", "2")
NONZERO = {("01", "01"), ("02", "02"), ("1", "1"), ("2", "2"), ("1", "2"), ("1", "02")}


def parse_block(block: str):
    try:
        a, b = block.split("-")
    except (AttributeError, ValueError):
        raise UnknownBlock(f"bad block name {block!r}; expected e.g. '1-2'") from None
    if a not in BLOCKS or b not in BLOCKS:
        raise UnknownBlock(f"unknown block {block!r}; blocks are {BLOCKS}")
    return a, b


@dataclass
class _Atoms:
    G: np.ndarray        # cumulative exponent from the atom's origin, (A, Nt+1)
    mass: np.ndarray     # mass present at each grid time (zero before birth), (A, Nt+1)
    age: np.ndarray      # age index at each grid time (-1 before birth), (A, Nt+1)
    right: np.ndarray    # True -> right values, False -> left limits, (A,)

    def values(self, R, L):
        """Tabulated function evaluated at each atom's age over the grid."""
        ok = self.age >= 0
        idx = np.where(ok, self.age, 0)
        v = np.where(self.right[:, None], R[idx], L[idx])
        return np.where(ok, v, 0.0)


class NoiseKernels:
    """All grid covariances and Volterra coefficients for a list of functionals."""

    def __init__(self, model: ModelSpec, lln: LlnSolution, functionals, literal: bool = False):
        if lln.model_digest != model.digest:
            raise GridMismatch("limit solution belongs to a different model")
        labels = [f.label for f in functionals]
        if len(set(labels)) != len(labels):
            raise ValueError("functional labels must be unique")
        self.model, self.lln, self.literal = model, lln, bool(literal)
        self.functionals = list(functionals)
        self.labels = labels
        g = lln.grid if lln.grid is not None else CohortGrid(model, lln.T, lln.dt)
        self.g = g
        self.dt, self.Nt, self.J = g.dt, g.Nt, g.J
        self.t = np.arange(self.Nt + 1) * self.dt
        self.F = np.asarray(lln.F, dtype=float)
        self.S = np.asarray(lln.S, dtype=float)
        self.G0, self.H = exponent_tables(g, self.F)
        self.beta = g.w[None, :] * self.F[:, None] * self.S
        L = g.nA + self.Nt + 1
        self.tab = {f.label: f.tables(self.J, self.dt, L) for f in self.functionals}
        self._build()

    # ------------------------------------------------------------- atoms
    def _init_atoms(self, j):
        g, Nt = self.g, self.Nt
        n = np.arange(Nt + 1)
        i = np.arange(g.nA + 1)
        G = np.concatenate([self.G0[j], self.G0[j]])
        w = np.concatenate([g.wR[j], g.wL[j]])
        age = np.concatenate([i[:, None] + n[None, :]] * 2)
        right = np.repeat([True, False], g.nA + 1)
        keep = w > 0
        mass = w[:, None] * np.exp(-G)
        return _Atoms(G[keep], mass[keep], age[keep], right[keep]), w[keep]

    def _born_atoms(self, j):
        Nt, dt = self.Nt, self.dt
        H = self.H[j]
        b = np.arange(Nt + 1)
        m = np.arange(Nt + 1)
        w0, w1 = panel_weights(H[:-1, :], H[1:, :])             # panel k: [k, k+1], target m
        muL = np.zeros((Nt + 1, Nt + 1))
        muR = np.zeros((Nt + 1, Nt + 1))
        muL[:-1] = np.where(m[None, :] >= b[:-1, None] + 1, dt * w0 * self.beta[:-1, j, None], 0.0)
        muR[1:] = np.where(m[None, :] >= b[1:, None], dt * w1 * self.beta[1:, j, None], 0.0)
        age = m[None, :] - b[:, None]
        age = np.where(age >= 0, age, -1)
        atoms = _Atoms(np.concatenate([H, H]), np.concatenate([muL, muR]),
                       np.concatenate([age, age]), np.repeat([False, True], Nt + 1))
        keep = atoms.mass.any(axis=1)
        return _Atoms(atoms.G[keep], atoms.mass[keep], atoms.age[keep], atoms.right[keep])

    # ------------------------------------------------------------- assembly
    def _build(self):
        Nt, dt, J, F = self.Nt, self.dt, self.J, self.F
        nf = len(self.functionals)
        shape = (Nt + 1, Nt + 1)
        self.Zi = np.zeros((nf, J) + shape)      # [f, j, m, n]
        self.Zb = np.zeros((nf, J) + shape)
        self.P02 = np.zeros((nf, nf) + shape)
        self.P22 = np.zeros((nf, nf) + shape)
        self.M01 = np.zeros((nf, nf) + shape)
        means = np.zeros((nf, Nt + 1))
        for j in range(J):
            ai, w0 = self._init_atoms(j)
            ab = self._born_atoms(j)
            gR, gL = self.g.gamR[j], self.g.gamL[j]
            vals_i = [ai.values(self.tab[lab][0][j], self.tab[lab][1][j]) for lab in self.labels]
            vals_b = [ab.values(self.tab[lab][0][j], self.tab[lab][1][j]) for lab in self.labels]
            self._sweep(ai, ai.values(gR, gL), vals_i, self.Zi[:, j], self.P02)
            self._sweep(ab, ab.values(gR, gL), vals_b, self.Zb[:, j], self.P22)
            # initial sampling: covariance of transported values under the initial law
            E = np.exp(-ai.G)
            X = [v * E for v in vals_i]
            for a in range(nf):
                for c in range(nf):
                    self.M01[a, c] += (w0[:, None] * X[a]).T @ X[c]
            for a in range(nf):
                means[a] += w0 @ X[a]
        for a in range(nf):
            for c in range(nf):
                self.M01[a, c] -= np.outer(means[a], means[c])

        # newborn at t_m with trait theta, observed at t_n: one-sided values in s
        m = np.arange(Nt + 1)
        lag = m[None, :] - m[:, None]                            # [m, n] -> n - m
        ok = lag >= 0
        lagc = np.where(ok, lag, 0)
        decay = np.exp(-np.transpose(self.H, (1, 2, 0)))          # [m, n, theta]
        self.XL = np.zeros((nf,) + shape + (J,))
        self.XR = np.zeros((nf,) + shape + (J,))
        for a, lab in enumerate(self.labels):
            R, L = self.tab[lab]
            for th in range(J):
                self.XL[a, :, :, th] = np.where(lag > 0, L[th][lagc], 0.0) * decay[:, :, th]
                self.XR[a, :, :, th] = np.where(ok & (m[:, None] > 0), R[th][lagc], 0.0) * decay[:, :, th]

        w = self.g.w
        half = 0.5 * dt * F                                       # [m]
        coef11 = half[:, None] * w[None, :] * self.S               # [m, theta]
        coefC = half[:, None] * w[None, :]
        K = self.g.K
        ZKi = np.einsum("fjmn,jt->fmnt", self.Zi, K)               # [f, m, n', theta]
        ZKb = np.einsum("fjmn,jt->fmnt", self.Zb, K)
        gt = m[None, :] > m[:, None]                               # n' > m
        ge = (m[None, :] >= m[:, None]) & (m[:, None] > 0)         # n' >= m, m > 0
        self.P11 = np.zeros((nf, nf) + shape)
        self.C12 = np.zeros((nf, nf) + shape)
        self.C102 = np.zeros((nf, nf) + shape)
        for a in range(nf):
            for c in range(nf):
                for th in range(J):
                    XLa = self.XL[a, :, :, th]
                    XRa = self.XR[a, :, :, th]
                    self.P11[a, c] += (coef11[:, th, None] * XLa).T @ self.XL[c, :, :, th]
                    self.P11[a, c] += (coef11[:, th, None] * XRa).T @ self.XR[c, :, :, th]
                    for Z, out in ((ZKb, self.C12), (ZKi, self.C102)):
                        Zc = Z[c, :, :, th]
                        out[a, c] += (coefC[:, th, None] * XLa).T @ np.where(gt, Zc, 0.0)
                        out[a, c] += (coefC[:, th, None] * XRa).T @ np.where(ge, Zc, 0.0)

    def _sweep(self, atoms: _Atoms, gam, vals, Z, P):
        """One pass over target times ``q`` accumulating the pairings ``Z`` and the
        removal covariances ``P`` (s-trapezoid up to ``min(n, n')``)."""
        Nt, dt, F = self.Nt, self.dt, self.F
        nf = len(vals)
        mg = atoms.mass * gam                                        # [alpha, m]
        S_run = np.zeros(atoms.G.shape[0])
        D0 = np.ones(atoms.G.shape[0])
        for q in range(Nt + 1):
            if q > 0:
                step = np.exp(-2.0 * (atoms.G[:, q] - atoms.G[:, q - 1]))
                S_run = S_run * step
                D0 = D0 * step
            S_run = S_run + F[q] * mg[:, q]
            cum = dt * S_run - 0.5 * dt * (F[q] * mg[:, q] + F[0] * mg[:, 0] * D0) if q > 0 else None
            E = np.exp(-(atoms.G[:, q:] - atoms.G[:, q, None]))
            X = [v[:, q:] * E for v in vals]
            for a in range(nf):
                Z[a, q, q:] = mg[:, q] @ X[a]
            if cum is None:
                continue
            for a in range(nf):
                ca = cum * vals[a][:, q]
                for c in range(nf):
                    P[a, c, q, q:] += ca @ X[c]
                    P[c, a, q + 1:, q] += ca @ X[c][:, 1:]

    # ------------------------------------------------------------- access
    def index(self, label):
        try:
            return self.labels.index(label if isinstance(label, str) else label.label)
        except ValueError:
            raise MissingFunctional(f"functional {label!r} is not part of this noise model") from None

    def block(self, block: str, f=0, g=0) -> np.ndarray:
        """Grid covariance ``Cov(M_a(f)(t_n), M_b(g)(t_n'))`` as an ``(Nt+1, Nt+1)`` matrix."""
        a, b = parse_block(block)
        fi = f if isinstance(f, (int, np.integer)) else self.index(f)
        gi = g if isinstance(g, (int, np.integer)) else self.index(g)
        if (a, b) in NONZERO:
            return self._direct(a, b, fi, gi)
        if (b, a) in NONZERO:
            return self._direct(b, a, gi, fi).T
        return np.zeros((self.Nt + 1, self.Nt + 1))

    def _direct(self, a, b, f, g):
        if (a, b) == ("01", "01"):
            return self.M01[f, g]
        if (a, b) == ("02", "02"):
            return self.P02[f, g]
        if (a, b) == ("2", "2"):
            return self.P22[f, g]
        if (a, b) == ("1", "1"):
            return self.P11[f, g]
        if (a, b) == ("1", "2"):
            return self.C12[f, g]
        if self.literal:
            return np.zeros((self.Nt + 1, self.Nt + 1))
        return self.C102[f, g]

    def noise_covariance(self, idx=None):
        """Covariance of ``N = M01 - M02 + M1 - M2`` over (functional, time)."""
        nf = len(self.labels)
        sign = {"01": 1.0, "02": -1.0, "1": 1.0, "2": -1.0}
        idx = np.arange(self.Nt + 1) if idx is None else np.asarray(idx)
        n = idx.size
        C = np.zeros((nf * n, nf * n))
        for f in range(nf):
            for g in range(nf):
                acc = np.zeros((self.Nt + 1, self.Nt + 1))
                for a in BLOCKS:
                    for b in BLOCKS:
                        acc += sign[a] * sign[b] * self.block(f"{a}-{b}", f, g)
                C[f * n:(f + 1) * n, g * n:(g + 1) * n] = acc[np.ix_(idx, idx)]
        return 0.5 * (C + C.T)

    def joint_covariance(self, idx=None):
        """Joint covariance of (M01, M02, M1, M2) over (block, functional, time)."""
        nf = len(self.labels)
        idx = np.arange(self.Nt + 1) if idx is None else np.asarray(idx)
        n = idx.size
        size = nf * n
        C = np.zeros((4 * size, 4 * size))
        for ia, a in enumerate(BLOCKS):
            for ib, b in enumerate(BLOCKS):
                for f in range(nf):
                    for g in range(nf):
                        blk = self.block(f"{a}-{b}", f, g)[np.ix_(idx, idx)]
                        r0 = ia * size + f * n
                        c0 = ib * size + g * n
                        C[r0:r0 + n, c0:c0 + n] = blk
        return 0.5 * (C + C.T)

    # ------------------------------------------------------------- Volterra coefficients
    def volterra_coefficients(self, f):
        """``cF[n, m]`` and ``cS[n, m, j]`` of the mild form for functional ``f``."""
        a = f if isinstance(f, (int, np.integer)) else self.index(f)
        Nt, dt = self.Nt, self.dt
        w = self.g.w
        X = self.XL[a] + self.XR[a]                                   # [m, n, theta]
        cS = 0.5 * dt * self.F[:, None, None] * w[None, None, :] * X   # [m, n, j]
        cS = np.transpose(cS, (1, 0, 2))                               # [n, m, j]
        first = 0.5 * dt * np.einsum("mnj,mj->nm", X, w[None, :] * self.S)
        m = np.arange(Nt + 1)
        cm = np.where((m[None, :] == 0) | (m[None, :] == m[:, None]), 0.5 * dt, dt)
        cm = np.where(m[None, :] <= m[:, None], cm, 0.0)
        cm[0, 0] = 0.0
        Z = (self.Zi[a] + self.Zb[a]).sum(axis=0)                      # [m, n]
        cF = first - cm * Z.T
        return cF, cS


# ------------------------------------------------------------------ scalar API


def _grid_index(kern: NoiseKernels, t):
    if t < -1e-12 or t > kern.t[-1] + 1e-9:
        raise GridError(f"time {t} outside [0, {kern.t[-1]}]")
    i = int(round(t / kern.dt))
    if abs(i * kern.dt - t) > 1e-9 * max(1.0, t):
        raise GridError(f"time {t} is not on the solver grid (step {kern.dt})")
    return i


def cov_M(model: ModelSpec, lln: LlnSolution, block: str, phi: TestFunctional, psi: TestFunctional,
          t: float, t2: float, literal: bool = False, kernels: NoiseKernels = None) -> float:
    a, b = parse_block(block)
    if (a, b) not in NONZERO and (b, a) not in NONZERO:
        return 0.0
    if literal and {a, b} == {"1", "02"}:
        return 0.0
    if kernels is None:
        fs = [phi] if phi.label == psi.label else [phi, psi]
        kernels = NoiseKernels(model, lln, fs, literal=literal)
    i, k = _grid_index(kernels, t), _grid_index(kernels, t2)
    return float(kernels.block(block, phi.label, psi.label)[i, k])


def measure_pairing(model: ModelSpec, lln: LlnSolution, R, L):
    """``<u_{t_m}, f>`` on the grid for a tabulated per-trait function (right/left tables)."""
    g = lln.grid if lln.grid is not None else CohortGrid(model, lln.T, lln.dt)
    G0, H = exponent_tables(g, lln.F)
    beta = g.w[None, :] * lln.F[:, None] * lln.S
    Nt, nA, dt = g.Nt, g.nA, g.dt
    idx = np.arange(nA + 1)[:, None] + np.arange(Nt + 1)[None, :]
    out = np.zeros(Nt + 1)
    m = np.arange(Nt + 1)
    for j in range(g.J):
        out += ((g.wR[j][:, None] * R[j][idx] + g.wL[j][:, None] * L[j][idx]) * np.exp(-G0[j])).sum(axis=0)
        w0, w1 = panel_weights(H[j, :-1, :], H[j, 1:, :])
        k = np.arange(Nt)[:, None]
        valid = m[None, :] > k
        lag0 = np.where(valid, m[None, :] - k, 0)
        lag1 = np.where(valid, m[None, :] - k - 1, 0)
        born = beta[:-1, j, None] * L[j][lag0] * w0 + beta[1:, j, None] * R[j][lag1] * w1
        out += dt * np.where(valid, born, 0.0).sum(axis=0)
    return out


def cov_W(model: ModelSpec, lln: LlnSolution, phi: TestFunctional, psi: TestFunctional,
          t: float, t2: float) -> float:
    """``int_0^{t ^ t'} <mu_s, lambda> <mu_s, Rtilde(phi, psi)> ds`` (trapezoid on the grid)."""
    g = lln.grid if lln.grid is not None else CohortGrid(model, lln.T, lln.dt)
    if max(t, t2) > lln.T + 1e-9 or min(t, t2) < 0:
        raise GridError(f"times ({t}, {t2}) outside [0, {lln.T}]")
    q = min(t, t2)
    length = g.nA + g.Nt + 1
    rt = Rtilde(model, phi, psi, dt=g.dt, length=length)
    R, L = rt.tables(g.J, g.dt, length)
    vals = lln.F * measure_pairing(model, lln, R, L)
    nq = q / g.dt
    n0 = int(np.floor(nq + 1e-9))
    full = 0.5 * g.dt * (vals[:n0].sum() + vals[1:n0 + 1].sum()) if n0 > 0 else 0.0
    frac = nq - n0
    if frac > 1e-9:
        v1 = np.interp(q, lln.t, vals)
        full += 0.5 * frac * g.dt * (vals[n0] + v1)
    return float(full)


# ------------------------------------------------------------------ sampling

JITTER_START, JITTER_MAX = 1e-12, 1e-6


def factor_psd(C: np.ndarray, method: str = "eigh", rel_cut: float = 1e-11, ref: float = None):
    """Return ``(L, info)`` with ``L @ L.T ~= C``.

    Rows whose variance is below ``1e-13 * ref`` are treated as exactly zero.
    ``eigh`` drops eigenvalues below ``rel_cut * ref`` (null directions stay
    null); ``cholesky`` adds diagonal jitter ``1e-12 .. 1e-6`` (relative to the
    mean diagonal) until the factorization succeeds.  ``ref`` defaults to the
    largest eigenvalue scale of ``C`` itself.
    """
    C = 0.5 * (C + C.T)
    n = C.shape[0]
    diag = np.diag(C)
    ref = float(np.max(np.abs(diag), initial=0.0)) if ref is None else float(ref)
    L = np.zeros((n, 0))
    info = {"method": method, "jitter": 0.0, "zero_rows": 0}
    if n == 0 or ref <= 0.0:
        info["zero_rows"] = n
        return L, info
    live = diag > 1e-13 * ref
    info["zero_rows"] = int(n - live.sum())
    Cl = C[np.ix_(live, live)]
    if not live.any():
        return L, info
    if method == "eigh":
        w, V = np.linalg.eigh(Cl)
        keep = w > rel_cut * max(ref, float(w.max()))
        info.update(min_eig=float(w.min()), max_eig=float(w.max()), dropped=int(w.size - keep.sum()),
                    neg_mass=float(-w[w < 0].sum()))
        Ll = V[:, keep] * np.sqrt(w[keep])
    elif method == "cholesky":
        scale = float(np.mean(np.diag(Cl)))
        jit = 0.0
        while True:
            try:
                Ll = np.linalg.cholesky(Cl + jit * scale * np.eye(Cl.shape[0]))
                break
            except np.linalg.LinAlgError:
                jit = JITTER_START if jit == 0.0 else jit * 10.0
                if jit > JITTER_MAX * (1 + 1e-9):
                    raise FactorizationError("covariance not positive semidefinite up to jitter 1e-6") from None
        info["jitter"] = jit
    else:
        raise ValueError(f"unknown factorization {method!r}")
    L = np.zeros((n, Ll.shape[1]))
    L[live] = Ll
    return L, info


@dataclass
class GaussianSampleBatch:
    t: np.ndarray                # time grid of the samples
    labels: list
    n: int
    M01: np.ndarray              # [r, f, i]
    M02: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    seed: int
    info: dict = field(default_factory=dict)
    grid_index: np.ndarray = None
    kernels: NoiseKernels = field(default=None, repr=False)

    def block(self, name):
        return {"01": self.M01, "02": self.M02, "1": self.M1, "2": self.M2}[name]

    def noise(self):
        """``M01 - M02 + M1 - M2`` for every replicate, functional and time."""
        return self.M01 - self.M02 + self.M1 - self.M2

    def replicate(self, r):
        sl = slice(r, r + 1)
        return GaussianSampleBatch(self.t, self.labels, 1, self.M01[sl], self.M02[sl], self.M1[sl],
                                   self.M2[sl], self.seed, self.info, self.grid_index, self.kernels)

    def scaled(self, c):
        return GaussianSampleBatch(self.t, self.labels, self.n, c * self.M01, c * self.M02, c * self.M1,
                                   c * self.M2, self.seed, self.info, self.grid_index, self.kernels)

    def __add__(self, other):
        return GaussianSampleBatch(self.t, self.labels, self.n, self.M01 + other.M01, self.M02 + other.M02,
                                   self.M1 + other.M1, self.M2 + other.M2, self.seed, self.info,
                                   self.grid_index, self.kernels)

    def index(self, label):
        key = label if isinstance(label, str) else label.label
        if key not in self.labels:
            raise MissingFunctional(f"functional {key!r} is not in the noise batch")
        return self.labels.index(key)


def default_functionals(model: ModelSpec, extra=()):
    """``lambda`` and ``gamma K[.][i]`` for each trait, plus any extras."""
    fs = [TestFunctional.from_lambda(model)]
    fs += [TestFunctional.from_gamma_kernel(model, i) for i in range(model.n_traits)]
    return fs + list(extra)


def sample_gaussian(model: ModelSpec, lln: LlnSolution, functionals, grid=None, n: int = 1,
                    seed: int = 0, literal: bool = False, method: str = "eigh",
                    kernels: NoiseKernels = None) -> GaussianSampleBatch:
    """Joint draws of (M01, M02, M1, M2) for each functional on ``grid`` (a subset of the solver grid)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if kernels is None:
        kernels = NoiseKernels(model, lln, functionals, literal=literal)
    idx = np.arange(kernels.Nt + 1) if grid is None else np.array([_grid_index(kernels, t) for t in grid])
    nf, nt = len(kernels.labels), idx.size
    size = nf * nt
    C = kernels.joint_covariance(idx)
    # M01 is independent of the rest; factor the two diagonal blocks separately
    ref = float(np.max(np.abs(np.diag(C)), initial=0.0))
    L0, info0 = factor_psd(C[:size, :size], method, ref=ref)
    L1, info1 = factor_psd(C[size:, size:], method, ref=ref)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    z0 = rng.standard_normal((n, L0.shape[1]))
    z1 = rng.standard_normal((n, L1.shape[1]))
    x0 = (z0 @ L0.T).reshape(n, nf, nt)
    x1 = (z1 @ L1.T).reshape(n, 3, nf, nt)
    info = {"01": info0, "rest": info1, "literal": kernels.literal}
    return GaussianSampleBatch(kernels.t[idx], list(kernels.labels), n, x0, x1[:, 0], x1[:, 1], x1[:, 2],
                               int(seed), info, idx, kernels)


def write_batch_csv(batch: GaussianSampleBatch, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["replicate", "block", "functional", "t", "value"])
        for r in range(batch.n):
            for name in BLOCKS:
                arr = batch.block(name)
                for f, lab in enumerate(batch.labels):
                    for i, t in enumerate(batch.t):
                        wr.writerow([r, name, lab, repr(float(t)), repr(float(arr[r, f, i]))])


def write_covariance_csv(kernels: NoiseKernels, path, idx=None) -> None:
    idx = np.arange(kernels.Nt + 1) if idx is None else np.asarray(idx)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["block", "f", "g", "t", "t2", "value"])
        for a, b in sorted(NONZERO):
            for f, lf in enumerate(kernels.labels):
                for g, lg in enumerate(kernels.labels):
                    M = kernels.block(f"{a}-{b}", f, g)
                    for i in idx:
                        for k in idx:
                            wr.writerow([f"{a}-{b}", lf, lg, repr(float(kernels.t[i])),
                                         repr(float(kernels.t[k])), repr(float(M[i, k]))])
