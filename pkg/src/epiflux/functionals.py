"""Test functionals phi(a, theta_j) and the jump operators built on them."""

from __future__ import annotations

import numpy as np

from .errors import GridMismatch
from .model import ModelSpec

TAILS = ("constant", "zero")


class TestFunctional:
    """A function of (age, trait) known either through a callable
    ``fn(a, j, side)`` or through right/left tables on a uniform age grid.

    Tables are extended past their end according to ``tail``.  Callables are
    re-tabulated on whatever grid is requested.
    """

    __test__ = False  # not a pytest class

    def __init__(self, label, fn=None, *, dt=None, right=None, left=None, tail="constant"):
        if (fn is None) == (right is None):
            raise ValueError("give either a callable or a table")
        if tail not in TAILS:
            raise ValueError(f"tail must be one of {TAILS}")
        self.label = str(label)
        self.fn = fn
        self.tail = tail
        self.dt = None if dt is None else float(dt)
        if right is not None:
            right = np.atleast_2d(np.asarray(right, dtype=float))
            left = right if left is None else np.atleast_2d(np.asarray(left, dtype=float))
            if right.shape != left.shape:
                raise ValueError("right and left tables differ in shape")
            if not (np.all(np.isfinite(right)) and np.all(np.isfinite(left))):
                raise ValueError("tabulated values must be finite")
            if self.dt is None or self.dt <= 0:
                raise ValueError("tables need a positive age step dt")
        self.right, self.left = right, left

    def __repr__(self):
        return f"TestFunctional({self.label!r})"

    # ---- constructors
    @classmethod
    def constant(cls, value=1.0, label=None):
        v = float(value)
        return cls(label or f"const({v:g})", lambda a, j, side: np.full(np.shape(a), v))

    @classmethod
    def from_lambda(cls, model: ModelSpec, label="lambda"):
        return cls(label, lambda a, j, side: model.eval_lambda(a, j, side))

    @classmethod
    def from_gamma_kernel(cls, model: ModelSpec, i: int, label=None):
        """``gamma(a, theta_j) K[j][i]``: its pairing with the density is the mean susceptibility toward trait ``i``."""
        K = model.kernel
        return cls(label or f"gammaK_{i}", lambda a, j, side: model.eval_gamma(a, j, side) * K[j, i])

    @classmethod
    def from_callable(cls, label, fn):
        return cls(label, fn)

    @classmethod
    def from_table(cls, label, dt, right, left=None, tail="constant"):
        return cls(label, dt=dt, right=right, left=left, tail=tail)

    # ---- evaluation
    def tables(self, n_traits: int, dt: float, length: int):
        """Right and left values at ages ``0, dt, ..., (length-1) dt``, shape ``(n_traits, length)``."""
        if self.fn is not None:
            a = np.arange(length) * dt
            R = np.array([np.broadcast_to(self.fn(a, j, "right"), a.shape) for j in range(n_traits)], dtype=float)
            L = np.array([np.broadcast_to(self.fn(a, j, "left"), a.shape) for j in range(n_traits)], dtype=float)
            return R, L
        if abs(self.dt - dt) > 1e-12 * max(dt, 1.0):
            raise GridMismatch(f"functional {self.label!r} is tabulated with step {self.dt}, solver uses {dt}")
        R, L = self.right, self.left
        if R.shape[0] == 1 and n_traits > 1:
            R, L = np.repeat(R, n_traits, axis=0), np.repeat(L, n_traits, axis=0)
        if R.shape[0] != n_traits:
            raise GridMismatch(f"functional {self.label!r} has {R.shape[0]} trait rows, model has {n_traits}")
        n = R.shape[1]
        if n >= length:
            return R[:, :length].copy(), L[:, :length].copy()
        pad = length - n
        if self.tail == "constant":
            R = np.concatenate([R, np.repeat(R[:, -1:], pad, axis=1)], axis=1)
            L = np.concatenate([L, np.repeat(R[:, n - 1:n], pad, axis=1)], axis=1)
        else:
            R = np.concatenate([R, np.zeros((R.shape[0], pad))], axis=1)
            L = np.concatenate([L, np.zeros((L.shape[0], pad))], axis=1)
        return R, L

    def __call__(self, a, j, side="right"):
        if self.fn is not None:
            return self.fn(np.asarray(a, dtype=float), j, side)
        a = np.asarray(a, dtype=float)
        idx = np.rint(a / self.dt).astype(int)
        if np.any(np.abs(idx * self.dt - a) > 1e-9 * max(self.dt, 1.0)):
            raise GridMismatch(f"functional {self.label!r} is only known on its age grid")
        R, L = self.tables(max(j + 1, self.right.shape[0]), self.dt, int(idx.max()) + 1 if idx.size else 1)
        tab = R if side == "right" else L
        return tab[j][idx]


def _same_grid(*fs):
    dts = {f.dt for f in fs if f.fn is None}
    if len(dts) > 1:
        raise GridMismatch(f"functionals tabulated on different age grids: {sorted(dts)}")
    return dts.pop() if dts else None


def _jump_tables(model: ModelSpec, phi, psi, dt, length):
    """Per trait i: ``gamma(a, i)``, and the jump differences
    ``phi(0, j) - phi(a, i)`` for every landing trait ``j`` (right and left values)."""
    J = model.n_traits
    a = np.arange(length) * dt
    gR = np.array([model.eval_gamma(a, i, "right") for i in range(J)])
    gL = np.array([model.eval_gamma(a, i, "left") for i in range(J)])
    out = []
    for f in (phi, psi):
        if f is None:
            out.append(None)
            continue
        R, L = f.tables(J, dt, length)
        zero = R[:, 0]                                            # phi(0, theta_j)
        out.append((zero[None, :, None] - R[:, None, :], zero[None, :, None] - L[:, None, :]))
    return gR, gL, out


def _operator(model, phi, psi, dt, length, power):
    dt = _same_grid(phi, *(() if psi is None else (psi,))) or dt
    if dt is None:
        raise GridMismatch("an age step is needed for callable functionals")
    gR, gL, ((dR, dL), other) = _jump_tables(model, phi, psi, dt, length)
    if power == 1:
        qR, qL = dR, dL
    elif power == 2:
        qR, qL = dR**2, dL**2
    else:
        eR, eL = other
        qR, qL = dR * eR, dL * eL
    Kw = model.kernel * model.weights[None, :]                   # [i, j]
    R = gR * np.einsum("ij,ija->ia", Kw, qR)
    L = gL * np.einsum("ij,ija->ia", Kw, qL)
    return R, L, dt


def operator_R(model: ModelSpec, phi: TestFunctional, dt=None, length=None):
    """``R phi(a, i) = sum_j (phi(0, j) - phi(a, i)) gamma(a, i) K[i][j] w_j`` as a tabulated functional."""
    length = length or _default_length(model, dt or phi.dt)
    R, L, dt = _operator(model, phi, None, dt, length, 1)
    return TestFunctional.from_table(f"R[{phi.label}]", dt, R, L)


def R2(model: ModelSpec, phi: TestFunctional, dt=None, length=None):
    length = length or _default_length(model, dt or phi.dt)
    R, L, dt = _operator(model, phi, None, dt, length, 2)
    return TestFunctional.from_table(f"R2[{phi.label}]", dt, R, L)


def Rtilde(model: ModelSpec, phi: TestFunctional, psi: TestFunctional, dt=None, length=None):
    length = length or _default_length(model, dt or phi.dt or psi.dt)
    R, L, dt = _operator(model, phi, psi, dt, length, 3)
    return TestFunctional.from_table(f"Rt[{phi.label},{psi.label}]", dt, R, L)


def _default_length(model, dt):
    if dt is None:
        raise GridMismatch("an age step is needed for callable functionals")
    return int(np.ceil(model.probe_max / dt)) + 1
