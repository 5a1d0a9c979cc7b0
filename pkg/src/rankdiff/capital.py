"""Capital distribution: market weights, capital measure, stationary density and phases.

Positions are log-capitalisations, so market weights are a softmax of the
positions. In the mean-field limit the capital held at quantile level ``v``
(counted from the top) has density proportional to ``exp(Q(1 - v))`` where
``Q`` is the quantile function of the particle law.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .coefficients import MeanFieldProfile, mean_drift
from .errors import (
    CriticalPhaseError,
    DomainError,
    InsufficientDataError,
    InvalidParameterError,
    NonIntegrabilityError,
)
from .io import fmt

PHASE_TOL = 1e-9
NORMALIZATION_TOL = 1e-6
# ratio of successive decade contributions at or above which the ladder is declared divergent
DIVERGENCE_RATIO = 0.999
_LADDER = tuple(10.0 ** -k for k in range(3, 15))


@dataclass(frozen=True)
class CapitalCurve:
    """Ranked market weights ``mu[1] >= ... >= mu[n]``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise InvalidParameterError("weights must be a non-empty 1-d array")
        if np.any(w <= 0) or np.any(np.diff(w) > 0) or abs(w.sum() - 1.0) > 1e-12 * w.size:
            raise InvalidParameterError("weights must be positive, nonincreasing and sum to 1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def log_rank(self) -> np.ndarray:
        return np.log(np.arange(1, self.n + 1))

    @property
    def log_weight(self) -> np.ndarray:
        return np.log(self.weights)

    def rows(self):
        """``(rank, weight, log_rank, log_weight)`` rows."""
        return list(zip(range(1, self.n + 1), self.weights.tolist(), self.log_rank.tolist(), self.log_weight.tolist()))


CURVE_HEADER = ("rank", "weight", "log_rank", "log_weight")


def market_weights(positions) -> CapitalCurve:
    x = np.asarray(positions, dtype=float)
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise DomainError("positions must be a non-empty finite vector")
    e = np.exp(np.sort(x)[::-1] - np.max(x))
    return CapitalCurve(e / e.sum())


def mean_capital_curve(snapshots) -> CapitalCurve:
    """Curve of the time-averaged log weights, renormalised (a geometric mean per rank)."""
    snaps = np.atleast_2d(np.asarray(snapshots, dtype=float))
    logs = np.array([market_weights(s).log_weight for s in snaps])
    avg = logs.mean(axis=0)
    e = np.exp(avg - avg.max())
    return CapitalCurve(e / e.sum())


class CapitalMeasure:
    """``sum_p mu[p] delta_{p/n}`` on ``[0, 1]``."""

    def __init__(self, curve: CapitalCurve):
        self.curve = curve
        # cap rounding overshoot so the cdf stays monotone and ends at 1
        self._cum = np.minimum(np.concatenate([[0.0], np.cumsum(curve.weights)]), 1.0)
        self._cum[-1] = 1.0

    def cdf(self, v):
        """Share of total capital held by the top ``100 v`` percent of ranks."""
        v = np.asarray(v, dtype=float)
        if np.any((v < 0) | (v > 1)):
            raise DomainError("v must lie in [0, 1]")
        n = self.curve.n
        k = np.floor(v * n + 1e-9).astype(int)
        out = self._cum[np.clip(k, 0, n)]
        return float(out) if out.ndim == 0 else out


def capital_measure(curve: CapitalCurve) -> CapitalMeasure:
    return CapitalMeasure(curve)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    n_points: int


def loglog_slope(curve: CapitalCurve, top_fraction: float = 0.1) -> SlopeFit:
    """Least-squares slope of ``log mu[p]`` against ``log p`` for ``2 <= p <= top_fraction n``."""
    if not 0 < top_fraction < 1:
        raise InvalidParameterError("top_fraction must lie in (0, 1)")
    last = int(math.floor(top_fraction * curve.n + 1e-9))
    npts = last - 1
    if npts < 10:
        raise InsufficientDataError(f"only {max(npts, 0)} ranks in the top fraction after dropping rank 1; need 10")
    x = curve.log_rank[1:last]
    y = curve.log_weight[1:last]
    if np.ptp(y) == 0.0:
        return SlopeFit(0.0, 0.0, npts)
    fit = stats.linregress(x, y)
    return SlopeFit(float(fit.slope), float(fit.stderr), npts)


# mean-field densities

@dataclass(frozen=True)
class CapitalDensity:
    v: np.ndarray
    density: np.ndarray
    normalizer: float

    def rows(self):
        return list(zip(self.v.tolist(), self.density.tolist()))


def _quad(f, a, b, **kw):
    # near v = 0 the argument 1 - v of the quantile function carries rounding
    # noise of relative size 1e-16 / v; quad then reports roundoff, harmlessly
    # since those decades carry little mass
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-10, limit=200, **kw)[0]


def _tail_sum(pieces: Sequence[float], side: str) -> float:
    """Sum the decade contributions and close them with a geometric tail."""
    pieces = np.asarray(pieces, dtype=float)
    total = float(pieces.sum())
    a, b = pieces[-2], pieces[-1]
    if b == 0.0 or b <= 1e-16 * max(total, 1e-300):
        return total
    r = b / a if a > 0 else math.inf
    if r >= DIVERGENCE_RATIO:
        raise NonIntegrabilityError(
            f"normaliser diverges near v = {side}: decade contributions stop shrinking (ratio {r:.4f})"
        )
    return total + b * r / (1.0 - r)


def _ladder_integral(top: Callable[[float], float], bottom: Callable[[float], float]) -> float:
    """``int_0^1 top(w) dw`` where ``bottom(s) = top(1 - s)`` evaluates the upper end accurately."""
    eps = _LADDER
    mid = _quad(top, eps[0], 1.0 - eps[0])
    low = [_quad(top, b, a) for a, b in zip(eps, eps[1:])]
    high = [_quad(bottom, b, a) for a, b in zip(eps, eps[1:])]
    return mid + _tail_sum(low, "0") + _tail_sum(high, "1")


def meanfield_capital_density(quantile_fn: Callable, v_grid) -> CapitalDensity:
    """``pi(v) = exp(Q(1 - v)) / int_0^1 exp(Q(1 - w)) dw`` for a quantile function ``Q``.

    The normaliser is accumulated over decades ``[10^-k-1, 10^-k]`` at both
    ends; if the contributions stop shrinking the law is not exponentially
    integrable and :class:`NonIntegrabilityError` is raised.
    """
    v = np.asarray(v_grid, dtype=float)
    if np.any(~(v > 0)) or np.any(~(v < 1)):
        raise DomainError("density is evaluated on (0, 1)")
    ref = float(np.asarray(quantile_fn(0.5), dtype=float))

    def top(w):
        return math.exp(float(quantile_fn(1.0 - w)) - ref)

    def bottom(s):
        return math.exp(float(quantile_fn(s)) - ref)

    z = _ladder_integral(top, bottom)
    if not math.isfinite(z) or z <= 0:
        raise NonIntegrabilityError("normaliser is not finite")
    dens = np.exp(np.asarray(quantile_fn(1.0 - v), dtype=float) - ref) / z
    return CapitalDensity(v, dens, z * math.exp(ref))


@dataclass(frozen=True)
class PhaseResult:
    lhs: object
    rhs: object
    label: str
    theoretical_slope: Optional[float]

    def to_text(self) -> str:
        slope = "undefined" if self.theoretical_slope is None else fmt(self.theoretical_slope)
        return (
            f"lhs={fmt(float(self.lhs))}\nrhs={fmt(float(self.rhs))}\n"
            f"label={self.label}\ntheoretical_slope={slope}\n"
        )


def classify_phase(mf: MeanFieldProfile) -> PhaseResult:
    """Compare ``bbar - b(1)`` with ``sigma2(1) / 2``; exact for rational profiles."""
    bbar = mean_drift(mf)
    b1 = mf.drift.at_one()
    s1 = mf.sigma2.at_one()
    lhs = bbar - b1
    rhs = s1 / 2
    exact = all(isinstance(q, Fraction) for q in (lhs, rhs))
    tol = 0 if exact else PHASE_TOL
    if lhs > rhs + tol:
        label, slope = "Dilute", -float(rhs) / float(lhs)
    elif lhs < rhs - tol:
        label, slope = "Aggregated", None
    else:
        label, slope = "Critical", None
    return PhaseResult(lhs, rhs, label, slope)


@dataclass(frozen=True)
class StationaryCapital:
    """Stationary capital density, or the degenerate aggregated limit."""

    label: str
    v: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    normalizer: Optional[float] = None
    dirac_at: Optional[float] = None

    @property
    def degenerate(self) -> bool:
        return self.dirac_at is not None


def _stationary_normalizer(mf: MeanFieldProfile):
    """``Z = int_0^1 exp(Psi(1 - v)) dv`` by algebraic-weight quadrature.

    ``exp(Psi(1 - v)) = 2^(k0 - k1) exp(R(1 - v)) v^-k1 (1 - v)^k0``, with the
    power factors handled exactly by the quadrature weight.
    """
    from .waves import remainder_spline

    k, spline = remainder_spline(mf)
    k0 = k.k0 or 0.0
    k1 = k.k1 or 0.0
    lo, hi = float(spline.x[0]), float(spline.x[-1])

    def f(v):
        return math.exp(float(spline(min(max(1.0 - v, lo), hi))))

    pts = sorted({1.0 - p for p in k.breaks if 0.0 < p < 1.0})
    total = 0.0
    edges = [0.0, *pts, 1.0]
    for a, b in zip(edges, edges[1:]):
        # weight (v - a)^alpha (b - v)^beta only at the true endpoints
        alpha = -k1 if a == 0.0 else 0.0
        beta = k0 if b == 1.0 else 0.0
        total += integrate.quad(f, a, b, weight="alg", wvar=(alpha, beta), epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return k, spline, 2.0 ** (k0 - k1) * total


def stationary_capital_density(mf: MeanFieldProfile, v_grid=None) -> StationaryCapital:
    """``pi_st(v) = exp(Psi(1 - v)) / int_0^1 exp(Psi(1 - w)) dw`` in the dilute phase.

    The aggregated phase returns the Dirac mass at 0 marker; the critical
    phase is refused.
    """
    from .waves import _require_oleinik

    _require_oleinik(mf)
    phase = classify_phase(mf)
    if phase.label == "Aggregated":
        return StationaryCapital("Aggregated", dirac_at=0.0)
    if phase.label == "Critical":
        raise CriticalPhaseError(
            "critical phase (bbar - b(1) = sigma2(1)/2): exp(Psi(1 - v)) sits on the integrability "
            "boundary and needs a finer analysis of Psi; see critical_diagnostic"
        )
    k, spline, z = _stationary_normalizer(mf)
    v = np.linspace(0.0, 1.0, 201)[1:-1] if v_grid is None else np.asarray(v_grid, dtype=float)
    if np.any(~(v > 0)) or np.any(~(v < 1)):
        raise DomainError("density is evaluated on (0, 1)")
    u = 1.0 - v
    psi = spline(np.clip(u, spline.x[0], spline.x[-1])) + k.logs(u, v)
    return StationaryCapital("Dilute", v, np.exp(psi) / z, z)


@dataclass(frozen=True)
class CriticalDiagnostic:
    cutoffs: tuple
    partial_normalizers: tuple
    growth_per_decade: float
    readings: str

    def to_text(self) -> str:
        lines = ["cutoff,partial_normalizer"]
        lines += [f"{fmt(e)},{fmt(z)}" for e, z in zip(self.cutoffs, self.partial_normalizers)]
        lines.append(f"# growth_per_decade={fmt(self.growth_per_decade)}")
        lines.append(f"# {self.readings}")
        return "\n".join(lines) + "\n"


def critical_diagnostic(mf: MeanFieldProfile, decades: int = 10) -> CriticalDiagnostic:
    """Growth of ``int_eps^1 exp(Psi(1 - v)) dv`` as ``eps`` decreases by decades.

    Bounded partial normalisers indicate integrability; steady growth per
    decade (logarithmic divergence) is the signature of the critical phase.
    """
    from .waves import psi as psi_exact, _require_oleinik

    _require_oleinik(mf)
    cut = [10.0 ** -j for j in range(1, decades + 1)]
    f = lambda v: math.exp(float(psi_exact(mf, 1.0 - v)))
    z = []
    acc = _quad(f, cut[0], 0.5) + _quad(f, 0.5, 1.0 - 1e-14)
    for a, b in zip([cut[0]] + cut, cut):
        if b < a:
            acc += _quad(f, b, a)
        z.append(acc)
    growth = float(z[-1] - z[-2])
    readings = (
        "phase rule: dilute iff bbar - b(1) > sigma2(1)/2, aggregated iff bbar - b(1) < sigma2(1)/2; "
        "a reading with '>' in both cases contradicts the dichotomy and is not used"
    )
    return CriticalDiagnostic(tuple(cut), tuple(z), growth, readings)
