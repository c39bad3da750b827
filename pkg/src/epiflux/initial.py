"""Initial age-of-infection laws."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


class AgeLaw:
    name = ""

    def pdf(self, a, side="right"):
        raise NotImplementedError

    def sf(self, a):
        """Tail mass beyond ``a``."""
        raise NotImplementedError

    def sample(self, n, rng):
        raise NotImplementedError

    def moment_finite(self, order: float) -> bool:
        return True

    def truncation(self, tail=1e-12) -> float:
        """Smallest convenient age beyond which at most ``tail`` mass remains."""
        raise NotImplementedError

    def to_config(self):
        raise NotImplementedError

    @property
    def is_atomic(self):
        return False


class Exponential(AgeLaw):
    name = "exponential"

    def __init__(self, rate=1.0):
        self.rate = float(rate)
        if self.rate <= 0:
            raise ValueError("exponential rate must be positive")

    def pdf(self, a, side="right"):
        a = np.asarray(a, dtype=float)
        inside = (a >= 0) if side == "right" else (a > 0)
        return np.where(inside, self.rate * np.exp(-self.rate * np.maximum(a, 0.0)), 0.0)

    def sf(self, a):
        return math.exp(-self.rate * max(a, 0.0))

    def sample(self, n, rng):
        return rng.exponential(1.0 / self.rate, size=n)

    def truncation(self, tail=1e-12):
        return -math.log(tail) / self.rate

    def to_config(self):
        return {"family": self.name, "rate": self.rate}


class Uniform(AgeLaw):
    name = "uniform"

    def __init__(self, low=0.0, high=1.0):
        self.low, self.high = float(low), float(high)
        if not 0 <= self.low < self.high:
            raise ValueError("uniform ages need 0 <= low < high")

    def pdf(self, a, side="right"):
        a = np.asarray(a, dtype=float)
        if side == "right":
            inside = (a >= self.low) & (a < self.high)
        else:
            inside = (a > self.low) & (a <= self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def sf(self, a):
        return float(np.clip((self.high - a) / (self.high - self.low), 0.0, 1.0))

    def sample(self, n, rng):
        return rng.uniform(self.low, self.high, size=n)

    def truncation(self, tail=1e-12):
        return self.high

    def to_config(self):
        return {"family": self.name, "low": self.low, "high": self.high}


class Gamma(AgeLaw):
    name = "gamma"

    def __init__(self, shape=2.0, scale=1.0):
        self.shape, self.scale = float(shape), float(scale)
        self._dist = stats.gamma(self.shape, scale=self.scale)

    def pdf(self, a, side="right"):
        a = np.asarray(a, dtype=float)
        return np.where(a >= 0, self._dist.pdf(a), 0.0)

    def sf(self, a):
        return float(self._dist.sf(a))

    def sample(self, n, rng):
        return rng.gamma(self.shape, self.scale, size=n)

    def truncation(self, tail=1e-12):
        return float(self._dist.isf(tail))

    def to_config(self):
        return {"family": self.name, "shape": self.shape, "scale": self.scale}


class Lomax(AgeLaw):
    """Pareto type II; heavy tailed, only moments of order < shape exist."""

    name = "lomax"

    def __init__(self, shape=3.0, scale=1.0):
        self.shape, self.scale = float(shape), float(scale)
        self._dist = stats.lomax(self.shape, scale=self.scale)

    def pdf(self, a, side="right"):
        a = np.asarray(a, dtype=float)
        return np.where(a >= 0, self._dist.pdf(a), 0.0)

    def sf(self, a):
        return float(self._dist.sf(a))

    def sample(self, n, rng):
        return self.scale * rng.pareto(self.shape, size=n)

    def moment_finite(self, order):
        return order < self.shape

    def truncation(self, tail=1e-12):
        return float(self._dist.isf(tail))

    def to_config(self):
        return {"family": self.name, "shape": self.shape, "scale": self.scale}


class Empirical(AgeLaw):
    """Atoms ``ages`` with equal weights (optionally paired with trait indices)."""

    name = "empirical"

    def __init__(self, ages, traits=None, path=None):
        self.ages = np.asarray(ages, dtype=float)
        self.traits = None if traits is None else np.asarray(traits, dtype=int)
        self.path = path
        if self.ages.size == 0 or np.any(self.ages < 0):
            raise ValueError("empirical ages must be a nonempty list of nonnegative values")

    @property
    def is_atomic(self):
        return True

    def sf(self, a):
        return float(np.mean(self.ages > a))

    def sample(self, n, rng):
        idx = rng.integers(0, self.ages.size, size=n)
        return self.ages[idx]

    def sample_pairs(self, n, rng):
        idx = rng.integers(0, self.ages.size, size=n)
        return self.ages[idx], self.traits[idx]

    def truncation(self, tail=1e-12):
        return float(self.ages.max())

    def to_config(self):
        if self.path is not None:
            return {"family": self.name, "file": str(self.path)}
        return {"family": self.name, "ages": self.ages.tolist()}


AGE_LAWS = {cls.name: cls for cls in (Exponential, Uniform, Gamma, Lomax)}
