"""Product-integration weights for panels of the form

    int_0^1 (p0 (1 - x) + p1 x) exp(-(h0 (1 - x) + h1 x)) dx = p0 w0 + p1 w1,

i.e. a linear factor against the exponential of a linear exponent.  Exact when
the exponent is linear on the panel, which is what keeps constant-coefficient
models at their fixed point to roundoff.
"""

from __future__ import annotations

import math

import numpy as np

_SERIES_CUT = 0.5
_N_TERMS = 14
_FACT = np.array([math.factorial(k + 2) for k in range(_N_TERMS)], dtype=float)
_C0 = 1.0 / _FACT                                   # g0 = sum (-d)^k / (k+2)!
_C1 = np.arange(1, _N_TERMS + 1) / _FACT            # g1 = sum (-d)^k (k+1) / (k+2)!


def _g(d):
    """``g0(d) = int (1-x) e^{-dx}``, ``g1(d) = int x e^{-dx}`` for ``d >= 0``."""
    d = np.asarray(d, dtype=float)
    g0 = np.empty_like(d)
    g1 = np.empty_like(d)
    small = d < _SERIES_CUT
    if np.any(small):
        x = -d[small]
        p0 = np.zeros_like(x)
        p1 = np.zeros_like(x)
        for k in range(_N_TERMS - 1, -1, -1):  # Horner
            p0 = p0 * x + _C0[k]
            p1 = p1 * x + _C1[k]
        g0[small] = p0
        g1[small] = p1
    big = ~small
    if np.any(big):
        x = d[big]
        e = np.exp(-x)
        g0[big] = (x + np.expm1(-x)) / x**2
        g1[big] = (1.0 - (1.0 + x) * e) / x**2
    return g0, g1


def panel_weights(h0, h1):
    """Weights ``(w0, w1)`` of the panel integral above (unit panel length)."""
    h0 = np.asarray(h0, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    d = h1 - h0
    pos = d >= 0
    g0, g1 = _g(np.abs(d))
    e0 = np.exp(-np.where(pos, h0, h1))
    w0 = e0 * np.where(pos, g0, g1)
    w1 = e0 * np.where(pos, g1, g0)
    return w0, w1


def trapezoid_sided(right, left, dx):
    """Composite trapezoid using the right value at each panel's left node and
    the left limit at its right node, so jumps sitting on nodes cost nothing."""
    right = np.asarray(right, dtype=float)
    left = np.asarray(left, dtype=float)
    return 0.5 * dx * (right[..., :-1].sum(axis=-1) + left[..., 1:].sum(axis=-1))
