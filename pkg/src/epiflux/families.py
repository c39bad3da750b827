"""Parametric age profiles for infectivity and susceptibility.

Every family is a right-continuous function of age ``a >= 0``.  Besides the
value itself each family can return the left limit at ``a`` (``side="left"``),
which the quadrature code needs to integrate piecewise-smooth integrands on
grids that contain the breakpoints.
"""

from __future__ import annotations

import numpy as np

# Integer codes understood by the compiled simulation kernel.
CONSTANT, WINDOW, STEP, EXP_DECAY, SIGMOID, TABULATED = range(6)


class AgeFamily:
    name: str = ""
    code: int = -1

    def __call__(self, a, side="right"):
        a = np.asarray(a, dtype=float)
        if side == "right":
            return self._right(a)
        if side == "left":
            return self._left(a)
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")

    def _right(self, a):
        raise NotImplementedError

    def _left(self, a):
        return self._right(a)

    def params(self) -> dict:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"family": self.name, **self.params()}

    def kernel_params(self) -> np.ndarray:
        """Packed parameters for the compiled kernel (length 4)."""
        raise NotImplementedError

    def table(self):
        return np.zeros(0), np.zeros(0)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_config() == other.to_config()

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Constant(AgeFamily):
    name, code = "constant", CONSTANT

    def __init__(self, value=0.0):
        self.value = float(value)

    def _right(self, a):
        return np.full(a.shape, self.value)

    def params(self):
        return {"value": self.value}

    def kernel_params(self):
        return np.array([self.value, 0.0, 0.0, 0.0])


class Window(AgeFamily):
    """``value`` on ``[start, end)``, zero elsewhere."""

    name, code = "window", WINDOW

    def __init__(self, value=1.0, start=0.0, end=1.0):
        self.value, self.start, self.end = float(value), float(start), float(end)
        if self.end < self.start:
            raise ValueError("window end must not precede start")

    def _right(self, a):
        return np.where((a >= self.start) & (a < self.end), self.value, 0.0)

    def _left(self, a):
        return np.where((a > self.start) & (a <= self.end), self.value, 0.0)

    def params(self):
        return {"value": self.value, "start": self.start, "end": self.end}

    def kernel_params(self):
        return np.array([self.value, self.start, self.end, 0.0])


class Step(AgeFamily):
    """``value`` for ``a >= threshold`` (right-closed), zero before."""

    name, code = "step", STEP

    def __init__(self, value=1.0, threshold=0.0):
        self.value, self.threshold = float(value), float(threshold)

    def _right(self, a):
        return np.where(a >= self.threshold, self.value, 0.0)

    def _left(self, a):
        return np.where(a > self.threshold, self.value, 0.0)

    def params(self):
        return {"value": self.value, "threshold": self.threshold}

    def kernel_params(self):
        return np.array([self.value, self.threshold, 0.0, 0.0])


class ExpDecay(AgeFamily):
    name, code = "exp_decay", EXP_DECAY

    def __init__(self, amplitude=1.0, rate=1.0):
        self.amplitude, self.rate = float(amplitude), float(rate)

    def _right(self, a):
        return self.amplitude * np.exp(-self.rate * a)

    def params(self):
        return {"amplitude": self.amplitude, "rate": self.rate}

    def kernel_params(self):
        return np.array([self.amplitude, self.rate, 0.0, 0.0])


class Sigmoid(AgeFamily):
    name, code = "sigmoid", SIGMOID

    def __init__(self, midpoint=0.0, slope=1.0, low=0.0, high=1.0):
        self.midpoint, self.slope = float(midpoint), float(slope)
        self.low, self.high = float(low), float(high)

    def _right(self, a):
        z = np.clip(-self.slope * (a - self.midpoint), -700.0, 700.0)
        return self.low + (self.high - self.low) / (1.0 + np.exp(z))

    def params(self):
        return {"midpoint": self.midpoint, "slope": self.slope, "low": self.low, "high": self.high}

    def kernel_params(self):
        return np.array([self.midpoint, self.slope, self.low, self.high])


class Tabulated(AgeFamily):
    """Linear interpolation of ``(ages, values)``; constant beyond both ends."""

    name, code = "tabulated", TABULATED

    def __init__(self, ages, values):
        self.ages = np.asarray(ages, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.ages.ndim != 1 or self.ages.shape != self.values.shape or self.ages.size < 1:
            raise ValueError("tabulated family needs matching 1-d ages and values")
        if np.any(np.diff(self.ages) <= 0):
            raise ValueError("tabulated ages must be strictly increasing")

    def _right(self, a):
        return np.interp(a, self.ages, self.values)

    def params(self):
        return {"ages": self.ages.tolist(), "values": self.values.tolist()}

    def kernel_params(self):
        return np.zeros(4)

    def table(self):
        return self.ages, self.values


FAMILIES = {cls.name: cls for cls in (Constant, Window, Step, ExpDecay, Sigmoid, Tabulated)}


def make_family(spec: dict) -> AgeFamily:
    spec = dict(spec)
    try:
        name = spec.pop("family")
    except KeyError:
        from .errors import SchemaError

        raise SchemaError("function entry is missing the 'family' key") from None
    if name not in FAMILIES:
        from .errors import ConfigError

        raise ConfigError(f"unknown function family {name!r}; known: {sorted(FAMILIES)}")
    try:
        return FAMILIES[name](**spec)
    except TypeError as exc:
        from .errors import ConfigError

        raise ConfigError(f"bad parameters for family {name!r}: {exc}") from None
