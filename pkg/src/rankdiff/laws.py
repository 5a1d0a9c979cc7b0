"""Initial laws on the line: CDF, quantile function, mean and sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidParameterError


class Law:
    """Minimal protocol shared by the particle simulator and the PDE solver."""

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def from_uniforms(self, u1, u2):
        """Map two independent uniforms per draw to samples of the law."""
        return self.ppf(u1)

    def mass_outside(self, x_min: float, x_max: float) -> float:
        return float(self.cdf(x_min) + (1.0 - self.cdf(x_max)))


@dataclass(frozen=True)
class PointMass(Law):
    at: float = 0.0

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.at, 1.0, 0.0)

    def ppf(self, u):
        return np.full(np.shape(u), float(self.at))

    @property
    def mean(self):
        return float(self.at)

    def mass_outside(self, x_min, x_max):
        return 0.0 if x_min <= self.at <= x_max else 1.0


@dataclass(frozen=True)
class Uniform(Law):
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise InvalidParameterError("uniform law needs high > low")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.low) / (self.high - self.low), 0.0, 1.0)

    def ppf(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, dtype=float)

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class Gaussian(Law):
    mu: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidParameterError("Gaussian variance must be positive")

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sd)

    def ppf(self, u):
        return self.mu + self.sd * special.ndtri(np.asarray(u, dtype=float))

    @property
    def mean(self):
        return float(self.mu)


@dataclass(frozen=True)
class Empirical(Law):
    """Equal-weight atoms; also the carrier of explicit sample files."""

    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise InvalidParameterError("empirical law needs at least one value")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def sorted(self):
        return np.sort(np.array(self.values))

    def cdf(self, x):
        return np.searchsorted(self.sorted, np.asarray(x, dtype=float), side="right") / len(self.values)

    def ppf(self, u):
        n = len(self.values)
        k = np.clip(np.ceil(np.asarray(u, dtype=float) * n).astype(int) - 1, 0, n - 1)
        return self.sorted[k]

    @property
    def mean(self):
        return float(np.mean(self.values))


@dataclass(frozen=True)
class Shifted(Law):
    """The law of ``X + shift``."""

    base: Law
    shift: float

    def cdf(self, x):
        return self.base.cdf(np.asarray(x, dtype=float) - self.shift)

    def ppf(self, u):
        return np.asarray(self.base.ppf(u)) + self.shift

    @property
    def mean(self):
        return self.base.mean + self.shift

    def from_uniforms(self, u1, u2):
        return np.asarray(self.base.from_uniforms(u1, u2)) + self.shift


@dataclass(frozen=True)
class Mixture(Law):
    components: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) != len(w) or len(w) == 0 or np.any(w < 0) or not w.sum() > 0:
            raise InvalidParameterError("mixture needs one nonnegative weight per component")
        object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))

    def cdf(self, x):
        return sum(w * np.asarray(c.cdf(x)) for c, w in zip(self.components, self.weights))

    def ppf(self, u):
        raise NotImplementedError("mixture quantiles are not needed; sample with from_uniforms")

    @property
    def mean(self):
        return float(sum(w * c.mean for c, w in zip(self.components, self.weights)))

    def from_uniforms(self, u1, u2):
        u1, u2 = np.asarray(u1, dtype=float), np.asarray(u2, dtype=float)
        edges = np.cumsum(self.weights)
        pick = np.minimum(np.searchsorted(edges, u2, side="right"), len(edges) - 1)
        out = np.empty(np.shape(u1))
        for j, c in enumerate(self.components):
            sel = pick == j
            if np.any(sel):
                # rescale so nested mixtures get a fresh uniform
                lo = edges[j] - self.weights[j]
                inner = np.clip((u2[sel] - lo) / self.weights[j], 0.0, 1.0)
                out[sel] = c.from_uniforms(u1[sel], inner)
        return out
