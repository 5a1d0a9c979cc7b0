"""Rank-based coefficient arrays and their mean-field generators.

A finite system of ``n`` particles is described by a :class:`CoefficientProfile`
holding one drift and one diffusion coefficient per rank (rank 1 is the lowest
particle). Mean-field systems are generated by a :class:`MeanFieldProfile`,
two continuous functions ``b`` and ``sigma2`` on ``[0, 1]`` stored as
piecewise-linear tables, sampled at ``k/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError, InvalidProfileError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _is_exact(values) -> bool:
    return any(isinstance(v, (Fraction, int)) and not isinstance(v, bool) for v in values) and all(
        isinstance(v, (Fraction, int)) for v in values
    )


def _as_number(v):
    if isinstance(v, (Fraction, int)) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, Real):
        return float(v)
    raise InvalidProfileError(f"not a real number: {v!r}")


class PiecewiseLinear:
    """Continuous piecewise-linear function on ``[0, 1]``.

    Knot values may be floats or :class:`fractions.Fraction`; the exact
    values are retained for the few quantities that are compared at a
    tolerance boundary (total integral, endpoint values), while all array
    evaluations run in float64. Integrals are exact per segment.
    """

    def __init__(self, knots: Sequence, values: Sequence):
        knots = tuple(_as_number(k) for k in knots)
        values = tuple(_as_number(v) for v in values)
        if len(knots) != len(values):
            raise InvalidProfileError("knots and values differ in length")
        if len(knots) < 2:
            raise InvalidProfileError("a profile needs at least two knots")
        if knots[0] != 0 or knots[-1] != 1:
            raise InvalidProfileError("knots must start at 0 and end at 1")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidProfileError("knots must be strictly increasing")
        if not all(math.isfinite(float(v)) for v in values):
            raise InvalidProfileError("knot values must be finite")
        self.knots_exact = knots
        self.values_exact = values
        self.knots = _frozen([float(k) for k in knots])
        self.values = _frozen([float(v) for v in values])
        h = np.diff(self.knots)
        self.slopes = _frozen(np.diff(self.values) / h)
        seg = 0.5 * (self.values[1:] + self.values[:-1]) * h
        self._cum = _frozen(np.concatenate([[0.0], np.cumsum(seg)]))
        self._rcum = _frozen(np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]))

    @classmethod
    def constant(cls, value) -> "PiecewiseLinear":
        return cls([0, 1], [value, value])

    @classmethod
    def from_function(cls, f: Callable[[float], float], n_knots: int = 257) -> "PiecewiseLinear":
        u = np.linspace(0.0, 1.0, n_knots)
        return cls(u, [float(f(x)) for x in u])

    def __repr__(self):
        return f"PiecewiseLinear(knots={self.knots.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other):
        return (
            isinstance(other, PiecewiseLinear)
            and self.knots_exact == other.knots_exact
            and self.values_exact == other.values_exact
        )

    def __hash__(self):
        return hash((self.knots_exact, self.values_exact))

    @staticmethod
    def _check_domain(u):
        u = np.asarray(u, dtype=float)
        if np.any(~(u >= 0.0)) or np.any(~(u <= 1.0)):
            raise DomainError("argument outside [0, 1]")
        return u

    def _segment(self, u):
        return np.clip(np.searchsorted(self.knots, u, side="right") - 1, 0, len(self.knots) - 2)

    def __call__(self, u):
        u = self._check_domain(u)
        out = np.interp(u, self.knots, self.values)
        return float(out) if out.ndim == 0 else out

    def antiderivative(self, u):
        """``int_0^u f(v) dv``, exact for the piecewise-linear table."""
        u = self._check_domain(u)
        i = self._segment(u)
        du = u - self.knots[i]
        out = self._cum[i] + du * (self.values[i] + 0.5 * self.slopes[i] * du)
        return float(out) if out.ndim == 0 else out

    def tail_integral(self, u):
        """``int_u^1 f(v) dv``, accumulated from the right end.

        Accurate in relative terms when ``1 - u`` is small, where
        ``total - antiderivative(u)`` would cancel.
        """
        u = self._check_domain(u)
        i = self._segment(u)
        right = self.knots[i + 1]
        w = right - u
        f_right = self.values[i + 1]
        out = self._rcum[i + 1] + w * (f_right - 0.5 * self.slopes[i] * w)
        return float(out) if out.ndim == 0 else out

    def integral(self):
        """Total integral over ``[0, 1]``, exact (a Fraction) for rational tables."""
        k, v = self.knots_exact, self.values_exact
        total = sum((k[j + 1] - k[j]) * (v[j + 1] + v[j]) / 2 for j in range(len(k) - 1))
        return total if _is_exact(k + v) else float(total)

    def at_zero(self):
        return self.values_exact[0]

    def at_one(self):
        return self.values_exact[-1]

    def shifted(self, c) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knots_exact, [v + c for v in self.values_exact])

    def scaled(self, c) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knots_exact, [v * c for v in self.values_exact])

    def _with_zero_crossings(self):
        k, v = list(self.knots), list(self.values)
        out_k, out_v = [k[0]], [v[0]]
        for j in range(len(k) - 1):
            a, b = v[j], v[j + 1]
            if a * b < 0:
                z = k[j] + (k[j + 1] - k[j]) * a / (a - b)
                if k[j] < z < k[j + 1]:
                    out_k.append(z)
                    out_v.append(0.0)
            out_k.append(k[j + 1])
            out_v.append(b)
        return out_k, out_v

    def positive_part(self) -> "PiecewiseLinear":
        k, v = self._with_zero_crossings()
        return PiecewiseLinear(k, [max(x, 0.0) for x in v])

    def absolute(self) -> "PiecewiseLinear":
        k, v = self._with_zero_crossings()
        return PiecewiseLinear(k, [abs(x) for x in v])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min_value(self) -> float:
        return float(np.min(self.values))

    def max_value(self) -> float:
        return float(np.max(self.values))

    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes)))

    def to_pairs(self) -> list:
        return [[_plain(k), _plain(v)] for k, v in zip(self.knots_exact, self.values_exact)]


def _plain(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return float(x)


@dataclass(frozen=True)
class MeanFieldProfile:
    """Drift ``b`` and squared diffusion ``sigma2`` on ``[0, 1]``."""

    drift: PiecewiseLinear
    sigma2: PiecewiseLinear

    def __post_init__(self):
        if np.any(self.sigma2.values <= 0.0):
            raise InvalidProfileError("sigma2 must be strictly positive on [0, 1]")

    @classmethod
    def from_knots(cls, drift, sigma2) -> "MeanFieldProfile":
        """Build from ``[(u, value), ...]`` pairs; values may be decimal strings."""
        if isinstance(sigma2, Real) or isinstance(sigma2, str):
            s2 = PiecewiseLinear.constant(_as_number(sigma2))
        else:
            s2 = PiecewiseLinear(*zip(*sigma2))
        if isinstance(drift, Real) or isinstance(drift, str):
            b = PiecewiseLinear.constant(_as_number(drift))
        else:
            b = PiecewiseLinear(*zip(*drift))
        return cls(b, s2)

    @classmethod
    def from_functions(cls, b, sigma2, n_knots: int = 257) -> "MeanFieldProfile":
        return cls(PiecewiseLinear.from_function(b, n_knots), PiecewiseLinear.from_function(sigma2, n_knots))

    @classmethod
    def linear_decreasing(cls, kappa, sigma2=1.0) -> "MeanFieldProfile":
        """``b(u) = kappa (1 - u)`` with constant ``sigma2``."""
        return cls(PiecewiseLinear([0, 1], [kappa, 0 * kappa]), PiecewiseLinear.constant(sigma2))

    def b(self, u):
        return self.drift(u)

    def s2(self, u):
        return self.sigma2(u)

    def shifted_drift(self, c) -> "MeanFieldProfile":
        return MeanFieldProfile(self.drift.shifted(c), self.sigma2)


@dataclass(frozen=True)
class CoefficientProfile:
    """Per-rank drifts and diffusion coefficients of an ``n``-particle system.

    ``drifts[k]`` and ``diffusions[k]`` apply to the particle of rank ``k + 1``
    (0-based storage, rank 1 lowest). Drifts may be given as Fractions, in
    which case stability computations run in exact arithmetic.
    """

    drifts: tuple
    diffusions: tuple

    def __post_init__(self):
        drifts = tuple(_as_number(v) for v in self.drifts)
        diffusions = tuple(_as_number(v) for v in self.diffusions)
        if len(drifts) == 0:
            raise InvalidParameterError("n must be at least 1")
        if len(drifts) != len(diffusions):
            raise InvalidProfileError("drifts and diffusions must have the same length")
        if not all(float(s) > 0.0 and math.isfinite(float(s)) for s in diffusions):
            raise InvalidProfileError("diffusion coefficients must be finite and > 0")
        if not all(math.isfinite(float(b)) for b in drifts):
            raise InvalidProfileError("drifts must be finite")
        object.__setattr__(self, "drifts", drifts)
        object.__setattr__(self, "diffusions", diffusions)

    @property
    def n(self) -> int:
        return len(self.drifts)

    @property
    def drift_array(self) -> np.ndarray:
        return np.array([float(b) for b in self.drifts])

    @property
    def diffusion_array(self) -> np.ndarray:
        return np.array([float(s) for s in self.diffusions])

    @property
    def variances(self) -> np.ndarray:
        return self.diffusion_array**2

    @property
    def exact(self) -> bool:
        return _is_exact(self.drifts)

    def mean_drift(self):
        return sum(self.drifts) / self.n


def make_atlas(n: int, gamma) -> CoefficientProfile:
    """Original Atlas model: only the lowest particle gets drift ``n * gamma``."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma!r}")
    drifts = (n * gamma,) + (0 * gamma,) * (n - 1)
    return CoefficientProfile(drifts, (1,) * n)


def smoothed_atlas_profile(gamma: float, width: float, sigma2: float = 1.0) -> MeanFieldProfile:
    """Triangular drift spike of total mass ``gamma`` on ``[0, width]``.

    A mean-field stand-in for the Atlas model, whose drift would formally be
    ``gamma`` times a Dirac mass at 0. No width is canonical.
    """
    if not gamma > 0:
        raise InvalidParameterError("gamma must be positive")
    if not 0 < width <= 1:
        raise InvalidParameterError("width must lie in (0, 1]")
    knots = [0.0, width] if width == 1 else [0.0, width, 1.0]
    values = [2.0 * gamma / width, 0.0] + ([0.0] if width < 1 else [])
    return MeanFieldProfile(PiecewiseLinear(knots, values), PiecewiseLinear.constant(sigma2))


def discretize_meanfield(mf: MeanFieldProfile, n: int) -> CoefficientProfile:
    """Sample ``b(k/n)`` and ``sqrt(sigma2(k/n))`` for ``k = 1..n``."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    u = np.arange(1, n + 1) / n
    s2 = np.atleast_1d(mf.sigma2(u))
    if np.any(s2 <= 0.0):
        raise InvalidProfileError("sigma2 is not positive at every k/n")
    return CoefficientProfile(tuple(np.atleast_1d(mf.drift(u)).tolist()), tuple(np.sqrt(s2).tolist()))


def flux_B(mf: MeanFieldProfile, u):
    """``B(u) = int_0^u b``."""
    return mf.drift.antiderivative(u)


def viscosity_A(mf: MeanFieldProfile, u):
    """``A(u) = 1/2 int_0^u sigma2``."""
    out = 0.5 * np.asarray(mf.sigma2.antiderivative(u))
    return float(out) if out.ndim == 0 else out


def mean_drift(mf: MeanFieldProfile):
    """``int_0^1 b``; a Fraction when the drift table is rational."""
    return mf.drift.integral()
