"""Travelling waves of the mean-field conservation law.

A wave ``u(t, x) = phi(x - bbar t)`` exists iff the Oleinik condition
``B(u) > bbar u`` holds on ``(0, 1)``; then ``phi = Psi^{-1}(. + c)`` with

    Psi(u) = int_{1/2}^u sigma2(v) / (2 (B(v) - bbar v)) dv.

``B(v) - bbar v`` has simple zeros at 0 and 1 whenever ``b(0) > bbar > b(1)``,
so ``Psi`` splits into two explicit logarithms plus a bounded remainder::

    Psi(u) = R(u) + k0 log(2u) - k1 log(2(1 - u)),
    k0 = sigma2(0) / (2 (b(0) - bbar)),   k1 = sigma2(1) / (2 (bbar - b(1))).

All quadrature acts on the remainder integrand, which is smooth up to the
boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicHermiteSpline

from .coefficients import MeanFieldProfile, mean_drift
from .errors import (
    DivergenceError,
    DomainError,
    InfiniteMeanError,
    PreconditionError,
    UndefinedWaveError,
)
from .laws import Law
from .meanfield_pde import evolve, init_grid, l1_distance

log = logging.getLogger(__name__)

OLEINIK_TOL = 1e-12
ZERO_SLOPE_TOL = 1e-12
MEAN_MATCH_TOL = 1e-6
_U_MIN = 1e-13
_GL_X, _GL_W = special.roots_legendre(16)


@dataclass(frozen=True)
class OleinikResult:
    holds: bool
    min_margin: float
    argmin: float


def oleinik_gap(mf: MeanFieldProfile, u):
    """``B(u) - bbar u``, integrated from the nearer end of ``[0, 1]``."""
    return _kernel(mf).gap(u)


def check_oleinik(mf: MeanFieldProfile, probe_count: int = 10_000) -> OleinikResult:
    """Evaluate ``B(u) - bbar u`` on interior probes and refine around interior minima.

    Holds iff every probed margin exceeds 1e-12; the boundary points, where
    the margin vanishes identically, are not probed.
    """
    k = _kernel(mf)
    u = np.arange(1, probe_count + 1) / (probe_count + 1)
    d = k.gap(u)
    j = int(np.argmin(d))
    best, arg = float(d[j]), float(u[j])
    interior = np.flatnonzero((d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:])) + 1
    for i in interior[np.argsort(d[interior])[:5]]:
        res = optimize.minimize_scalar(
            lambda x: float(k.gap(x)), bounds=(u[i - 1], u[i + 1]), method="bounded", options={"xatol": 1e-12}
        )
        if res.fun < best:
            best, arg = float(res.fun), float(res.x)
    return OleinikResult(best > OLEINIK_TOL, best, arg)


class _Kernel:
    """Per-profile quantities shared by every wave computation."""

    def __init__(self, mf: MeanFieldProfile):
        self.mf = mf
        self.bbar = float(mean_drift(mf))
        self.centered = mf.drift.shifted(-self.bbar)
        d0 = float(mf.drift.values[0]) - self.bbar
        d1 = self.bbar - float(mf.drift.values[-1])
        self.k0 = float(mf.sigma2.values[0]) / (2 * d0) if d0 > ZERO_SLOPE_TOL else None
        self.k1 = float(mf.sigma2.values[-1]) / (2 * d1) if d1 > ZERO_SLOPE_TOL else None
        self.breaks = mf.drift.knots.tolist() + mf.sigma2.knots.tolist()

    def gap(self, u):
        u = np.asarray(u, dtype=float)
        lo = self.centered.antiderivative(np.minimum(u, 0.5))
        hi = -np.asarray(self.centered.tail_integral(np.maximum(u, 0.5)))
        out = np.where(u <= 0.5, lo, hi)
        return float(out) if out.ndim == 0 else out

    def integrand(self, u):
        return np.asarray(self.mf.sigma2(u)) / (2.0 * np.asarray(self.gap(u)))

    def remainder(self, u):
        u = np.asarray(u, dtype=float)
        r = self.integrand(u)
        if self.k0 is not None:
            r = r - self.k0 / u
        if self.k1 is not None:
            r = r - self.k1 / (1.0 - u)
        return r

    def logs(self, u, w=None):
        """Explicit logarithmic part; ``w`` is ``1 - u`` when known more precisely."""
        u = np.asarray(u, dtype=float)
        w = 1.0 - u if w is None else np.asarray(w, dtype=float)
        out = np.zeros(np.broadcast(u, w).shape)
        if self.k0 is not None:
            out = out + self.k0 * np.log(2.0 * u)
        if self.k1 is not None:
            out = out - self.k1 * np.log(2.0 * w)
        return out

    def remainder_integral(self, a: float, b: float) -> float:
        """``int_a^b remainder`` by adaptive quadrature, split at profile knots."""
        lo, hi, sign = (a, b, 1.0) if a <= b else (b, a, -1.0)
        pts = sorted({lo, hi, *[p for p in self.breaks if lo < p < hi]})
        total = 0.0
        for p, q in zip(pts, pts[1:]):
            total += integrate.quad(
                lambda v: float(self.remainder(v)), p, q, epsabs=1e-14, epsrel=1e-13, limit=200
            )[0]
        return sign * total


@lru_cache(maxsize=64)
def _kernel(mf: MeanFieldProfile) -> _Kernel:
    return _Kernel(mf)


@lru_cache(maxsize=64)
def _oleinik_cached(mf: MeanFieldProfile) -> OleinikResult:
    return check_oleinik(mf)


def _require_oleinik(mf: MeanFieldProfile) -> _Kernel:
    res = _oleinik_cached(mf)
    if not res.holds:
        raise UndefinedWaveError(
            f"Oleinik condition fails (min of B(u) - bbar u is {res.min_margin:.3e} at u={res.argmin:.6g})"
        )
    return _kernel(mf)


def psi(mf: MeanFieldProfile, u):
    """``Psi(u)`` by adaptive quadrature of the regularised integrand."""
    k = _require_oleinik(mf)
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
        raise DomainError("Psi is defined on (0, 1)")
    if np.any((arr == 0) | (arr == 1)):
        raise DivergenceError("Psi diverges at u = 0 and u = 1")
    flat = arr.ravel()
    out = np.array([k.remainder_integral(0.5, float(x)) for x in flat]) + k.logs(flat)
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _table_grid(breaks) -> np.ndarray:
    geo = 0.5 * 0.85 ** np.arange(1, int(math.log(_U_MIN / 0.5) / math.log(0.85)) + 1)
    uni = np.linspace(0.0, 1.0, 257)[1:-1]
    pts = np.concatenate([geo, 1.0 - geo, uni, [0.5], np.asarray(breaks, dtype=float)])
    pts = pts[(pts >= _U_MIN) & (pts <= 1.0 - _U_MIN)]
    pts = np.unique(pts)
    return pts[np.concatenate([[True], np.diff(pts) > 1e-15])]


def _gauss_segments(k: _Kernel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (k.remainder(nodes) @ _GL_W)


@dataclass(frozen=True, eq=False)
class WaveProfile(Law):
    """Travelling-wave law with distribution function ``phi(x) = Psi^{-1}(x + shift)``."""

    mf: MeanFieldProfile
    shift: float
    speed: float
    u_table: np.ndarray
    psi_table: np.ndarray
    _kernel: _Kernel = field(repr=False)
    _spline: CubicHermiteSpline = field(repr=False)
    _mean0: float = field(repr=False)

    # Psi and its inverse
    def _R(self, u):
        return self._spline(np.clip(u, self.u_table[0], self.u_table[-1]))

    def psi(self, u, w=None):
        """Tabulated ``Psi``; ``w`` optionally supplies ``1 - u`` exactly."""
        u = np.asarray(u, dtype=float)
        out = self._R(u) + self._kernel.logs(u, w)
        return float(out) if out.ndim == 0 else out

    def _solve_logit(self, y):
        """Return ``s`` with ``Psi(expit(s)) = y``."""
        k = self._kernel
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s_tab = special.logit(self.u_table)
        idx = np.searchsorted(self.psi_table, y)
        s = np.empty_like(y)
        lo = np.empty_like(y)
        hi = np.empty_like(y)
        below = idx == 0
        above = idx == len(self.psi_table)
        inside = ~(below | above)
        if np.any(below | above):
            log.debug("wave quantile requested beyond the tabulated range; using log-tail asymptotics")
        # tails: R is flat to within |r| * 1e-13 beyond the table
        if np.any(below):
            r0 = self._R(self.u_table[0])
            u = 0.5 * np.exp((y[below] - r0 + k.k1 * math.log(2.0)) / k.k0)
            s[below] = special.logit(np.maximum(u, 1e-300))
        if np.any(above):
            r1 = self._R(self.u_table[-1])
            w = 0.5 * np.exp(-(y[above] - r1 - k.k0 * math.log(2.0)) / k.k1)
            s[above] = -special.logit(np.maximum(w, 1e-300))
        i = idx[inside]
        lo[inside], hi[inside] = s_tab[i - 1], s_tab[i]
        sub_y = y[inside]
        a, b = lo[inside], hi[inside]
        x = 0.5 * (a + b)
        for _ in range(100):
            u, w = special.expit(x), special.expit(-x)
            f = self._R(u) + k.logs(u, w) - sub_y
            a = np.where(f < 0, x, a)
            b = np.where(f > 0, x, b)
            dfds = np.asarray(k.integrand(u)) * u * w
            xn = x - f / dfds
            bad = ~((xn > a) & (xn < b)) | ~np.isfinite(xn)
            xn = np.where(bad, 0.5 * (a + b), xn)
            step = np.abs(xn - x)
            x = xn
            if np.all(step < 1e-13 * np.maximum(1.0, np.abs(x))):
                break
        s[inside] = x
        return s

    def psi_inverse(self, y):
        s = self._solve_logit(y)
        out = special.expit(s)
        return float(out[0]) if np.ndim(y) == 0 else out.reshape(np.shape(y))

    # Law protocol
    def cdf(self, x):
        return self.psi_inverse(np.asarray(x, dtype=float) + self.shift)

    def sf(self, x):
        s = self._solve_logit(np.asarray(x, dtype=float) + self.shift)
        out = special.expit(-s)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def ppf(self, u):
        return np.asarray(self.psi(u)) - self.shift

    @property
    def mean(self) -> float:
        return self._mean0 - self.shift

    def mass_outside(self, x_min, x_max):
        return float(self.cdf(x_min) + self.sf(x_max))

    def translated(self, target_mean: float) -> "WaveProfile":
        return _with_shift(self, self._mean0 - target_mean)

    def table(self, x) -> np.ndarray:
        """``(x, phi(x))`` rows."""
        x = np.asarray(x, dtype=float)
        return np.column_stack([x, self.cdf(x)])


def _with_shift(w: WaveProfile, shift: float) -> WaveProfile:
    return WaveProfile(w.mf, shift, w.speed, w.u_table, w.psi_table, w._kernel, w._spline, w._mean0)


def psi_inverse(w: WaveProfile, y):
    """``Psi^{-1}(y)`` for the profile's ``Psi``; saturates toward 0 and 1 in the tails."""
    return w.psi_inverse(y)


@lru_cache(maxsize=64)
def _tabulate(mf: MeanFieldProfile):
    """``(kernel, u, R, spline)``: the remainder of ``Psi`` on the refined u-grid.

    Each segment is integrated by 16-point Gauss-Legendre; ``R(1/2) = 0``.
    """
    k = _require_oleinik(mf)
    u = _table_grid(k.breaks)
    seg = _gauss_segments(k, u[:-1], u[1:])
    R = np.concatenate([[0.0], np.cumsum(seg)])
    R -= R[np.searchsorted(u, 0.5)]
    spline = CubicHermiteSpline(u, R, k.remainder(u))
    return k, u, R, spline


def remainder_spline(mf: MeanFieldProfile):
    """Kernel and interpolant of the bounded part of ``Psi`` (the logarithms removed)."""
    k, _, _, spline = _tabulate(mf)
    return k, spline


def wave_profile(mf: MeanFieldProfile, target_mean: float = 0.0) -> WaveProfile:
    """The travelling wave whose law has expectation ``target_mean``."""
    k = _require_oleinik(mf)
    if k.k0 is None:
        raise InfiniteMeanError("lower tail (u -> 0) is not integrable: b(0) = bbar, Psi diverges like -1/u")
    if k.k1 is None:
        raise InfiniteMeanError("upper tail (u -> 1) is not integrable: b(1) = bbar, Psi diverges like 1/(1-u)")
    k, u, R, spline = _tabulate(mf)
    psi_tab = R + k.logs(u)
    if np.any(np.diff(psi_tab) <= 0):
        raise AssertionError("Psi tabulation is not strictly increasing")
    # E[X] = int_0^1 Psi^{-1} quantile = int_0^1 Psi(u) du; the logarithms integrate in closed form
    int_R = float(spline.integrate(u[0], u[-1])) + R[0] * u[0] + R[-1] * (1.0 - u[-1])
    mean0 = int_R + (k.k0 - k.k1) * (math.log(2.0) - 1.0)
    w = WaveProfile(mf, 0.0, k.bbar, u, psi_tab, k, spline, mean0)
    return w.translated(target_mean)


@dataclass(frozen=True)
class StabilitySeries:
    times: np.ndarray
    distances: np.ndarray
    wave: WaveProfile

    def rows(self):
        return list(zip(self.times.tolist(), self.distances.tolist()))


def stability_experiment(
    mf: MeanFieldProfile,
    m: Law,
    horizon: float,
    x_min: float,
    x_max: float,
    nx: int,
    record_times=None,
    wave: Optional[WaveProfile] = None,
    theta="auto",
) -> StabilitySeries:
    """Evolve ``m`` and track the L1 distance to the wave translated by ``bbar t``.

    The wave defaults to the one with the same mean as ``m``; an explicit
    wave must match that mean to 1e-6.
    """
    if wave is None:
        wave = wave_profile(mf, m.mean)
    else:
        _require_oleinik(mf)
        if abs(wave.mean - m.mean) > MEAN_MATCH_TOL:
            raise PreconditionError(
                f"initial mean {m.mean:.9g} differs from the wave mean {wave.mean:.9g}"
            )
    times = np.linspace(0.0, horizon, 21) if record_times is None else np.asarray(record_times, dtype=float)
    g = init_grid(m, x_min, x_max, nx)
    dist = []
    for t in times:
        g = evolve(g, mf, float(t), theta=theta)
        dist.append(l1_distance(g, lambda x, t=t: wave.cdf(x - wave.speed * t)))
    return StabilitySeries(times, np.array(dist), wave)
