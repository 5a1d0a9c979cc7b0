"""Euler-Maruyama simulation of rank-based interacting diffusions.

Each step moves the particle currently at rank ``k`` by
``b_k dt + sigma_k sqrt(dt) g_i`` and then re-ranks by a stable sort on
``(position, particle index)``. The ranked system is never integrated with
local times; sorting the simulated positions gives the same ranked law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numba
import numpy as np
from scipy import integrate, optimize

from .coefficients import CoefficientProfile
from .errors import DomainError, InvalidParameterError, NumericalFailureError
from .laws import Law, PointMass
from .rng import NoiseSource, initial_uniforms

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ParticleState:
    """Positions indexed by particle, plus each particle's 0-based rank."""

    t: float
    positions: np.ndarray
    rank_of: np.ndarray = None

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        x.flags.writeable = False
        object.__setattr__(self, "positions", x)
        if self.rank_of is None:
            order = np.argsort(x, kind="stable")
            rank = np.empty_like(order)
            rank[order] = np.arange(len(x))
        else:
            rank = np.array(self.rank_of, dtype=np.int64)
        rank.flags.writeable = False
        object.__setattr__(self, "rank_of", rank)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def order(self) -> np.ndarray:
        """Particle indices sorted by rank."""
        out = np.empty_like(self.rank_of)
        out[self.rank_of] = np.arange(self.n)
        return out

    def sorted_positions(self) -> np.ndarray:
        return np.sort(self.positions)

    def is_valid(self) -> bool:
        if sorted(self.rank_of.tolist()) != list(range(self.n)):
            return False
        return bool(np.all(np.diff(self.positions[self.order]) >= 0))


def step(state: ParticleState, c: CoefficientProfile, dt: float, noise) -> ParticleState:
    """One Euler-Maruyama step; coefficients follow the ranks before the move."""
    if c.n != state.n:
        raise InvalidParameterError("profile and state sizes differ")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    g = np.asarray(noise, dtype=float)
    if g.shape != (state.n,) or not np.all(np.isfinite(g)):
        raise NumericalFailureError(f"non-finite or mis-shaped noise at t={state.t}")
    b = c.drift_array[state.rank_of]
    s = c.diffusion_array[state.rank_of]
    x = state.positions + b * dt + s * math.sqrt(dt) * g
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError(f"non-finite positions at t={state.t + dt}")
    return ParticleState(state.t + dt, x)


@numba.njit(cache=True)
def _advance(x, order, drifts, sigmas, dt, noise, step0, rec_steps, rec_ptr, out):
    n = x.shape[0]
    sqdt = math.sqrt(dt)
    for s in range(noise.shape[0]):
        for k in range(n):
            i = order[k]
            xi = x[i] + drifts[k] * dt + sigmas[k] * sqdt * noise[s, i]
            if not math.isfinite(xi):
                return s, rec_ptr
            x[i] = xi
        # insertion sort on (position, index): the previous order is nearly sorted
        for k in range(1, n):
            i = order[k]
            xi = x[i]
            j = k - 1
            while j >= 0 and (x[order[j]] > xi or (x[order[j]] == xi and order[j] > i)):
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = i
        gstep = step0 + s + 1
        while rec_ptr < rec_steps.shape[0] and rec_steps[rec_ptr] == gstep:
            out[rec_ptr, :] = x
            rec_ptr += 1
    return -1, rec_ptr


@dataclass(frozen=True)
class SimConfig:
    n: int
    dt: float
    t_end: float
    seed: int = 0
    initial_law: Law = field(default_factory=PointMass)
    record_times: tuple = ()
    burn_in: float = 0.2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidParameterError("n must be a positive integer")
        if not (self.dt > 0 and self.t_end > 0 and self.dt <= self.t_end):
            raise InvalidParameterError("need 0 < dt <= t_end")
        times = tuple(float(t) for t in (self.record_times or (0.0, self.t_end)))
        if any(t < 0 or t > self.t_end * (1 + _TIME_EPS) for t in times):
            raise InvalidParameterError("recording times must lie in [0, t_end]")
        if not 0 <= self.burn_in < 1:
            raise InvalidParameterError("burn_in is a fraction in [0, 1)")
        object.__setattr__(self, "record_times", times)
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - _TIME_EPS))

    def record_steps(self) -> np.ndarray:
        s = np.ceil(np.asarray(self.record_times) / self.dt - _TIME_EPS).astype(np.int64)
        return np.minimum(np.maximum(s, 0), self.n_steps)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of an ``n``-particle run; ``positions[j]`` is indexed by particle."""

    times: np.ndarray
    positions: np.ndarray
    requested_times: np.ndarray

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return len(self.times)

    def state(self, j: int) -> ParticleState:
        return ParticleState(float(self.times[j]), self.positions[j])

    def sorted_positions(self) -> np.ndarray:
        return np.sort(self.positions, axis=1)

    def gaps(self) -> np.ndarray:
        return np.diff(self.sorted_positions(), axis=1)

    def center_of_mass(self) -> np.ndarray:
        return self.positions.mean(axis=1)

    def after(self, t: float) -> "Trajectory":
        keep = self.times >= t - _TIME_EPS
        return Trajectory(self.times[keep], self.positions[keep], self.requested_times[keep])


def initial_positions(cfg: SimConfig, stream_ids=None) -> np.ndarray:
    ids = np.arange(cfg.n) if stream_ids is None else np.asarray(stream_ids)
    u = initial_uniforms(cfg.seed, ids)
    return np.asarray(cfg.initial_law.from_uniforms(u[:, 0], u[:, 1]), dtype=float)


def simulate(
    cfg: SimConfig,
    c: CoefficientProfile,
    initial: Optional[Sequence[float]] = None,
    stream_ids: Optional[Sequence[int]] = None,
    chunk_steps: Optional[int] = None,
) -> Trajectory:
    """Run the particle system and record snapshots.

    Snapshots are taken at the first grid time ``k dt`` at or after each
    requested time. The output is a deterministic function of ``(cfg, c,
    initial, stream_ids)``; ``stream_ids`` (default ``0..n-1``) selects the
    noise stream driving each particle, and ``chunk_steps`` only affects
    memory use.
    """
    if c.n != cfg.n:
        raise InvalidParameterError(f"profile has n={c.n}, config has n={cfg.n}")
    ids = np.arange(cfg.n) if stream_ids is None else np.asarray(stream_ids, dtype=np.int64)
    if ids.shape != (cfg.n,) or len(set(ids.tolist())) != cfg.n:
        raise InvalidParameterError("stream ids must be distinct")
    x = initial_positions(cfg, ids) if initial is None else np.array(initial, dtype=float)
    if x.shape != (cfg.n,) or not np.all(np.isfinite(x)):
        raise InvalidParameterError("initial positions must be n finite values")
    order = np.argsort(x, kind="stable").astype(np.int64)

    rec_steps_req = cfg.record_steps()
    perm = np.argsort(rec_steps_req, kind="stable")
    rec_steps = rec_steps_req[perm]
    out = np.empty((len(rec_steps), cfg.n))
    ptr = 0
    while ptr < len(rec_steps) and rec_steps[ptr] == 0:
        out[ptr] = x
        ptr += 1

    drifts = c.drift_array
    sigmas = c.diffusion_array
    noise = NoiseSource(cfg.seed, ids)
    total = cfg.n_steps
    chunk = chunk_steps or max(1, min(total, (1 << 21) // cfg.n))
    done = 0
    while done < total and ptr < len(rec_steps):
        m = min(chunk, total - done)
        g = noise.block(m)
        fail, ptr = _advance(x, order, drifts, sigmas, cfg.dt, g, done, rec_steps, ptr, out)
        if fail >= 0:
            raise NumericalFailureError(f"non-finite position at t={(done + fail + 1) * cfg.dt:.6g}")
        done += m

    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    times = rec_steps_req * cfg.dt
    return Trajectory(times, out[inv], np.asarray(cfg.record_times))


def empirical_cdf(state: Union[ParticleState, np.ndarray], x):
    """``(1/n) #{i : X_i <= x}``."""
    pos = state.positions if isinstance(state, ParticleState) else np.asarray(state, dtype=float)
    xs = np.sort(pos)
    out = np.searchsorted(xs, np.asarray(x, dtype=float), side="right") / len(xs)
    return float(out) if np.ndim(out) == 0 else out


def empirical_quantile(state: Union[ParticleState, np.ndarray], v):
    """Smallest position ``x`` with ``empirical_cdf(x) >= v``, for ``v`` in ``(0, 1]``."""
    pos = state.positions if isinstance(state, ParticleState) else np.asarray(state, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)) or np.any(~(v <= 1)):
        raise DomainError("quantile order must lie in (0, 1]")
    xs = np.sort(pos)
    n = len(xs)
    # guard against v*n landing a rounding error above an integer
    k = np.ceil(v * n - 1e-9).astype(int)
    out = xs[np.clip(k, 1, n) - 1]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Observables:
    center_of_mass: float
    centered_positions: np.ndarray
    gaps: np.ndarray


def observables(state: ParticleState) -> Observables:
    x = state.positions
    com = float(np.mean(x))
    return Observables(com, x - com, np.diff(np.sort(x)))


def _l1_steps(a, b) -> float:
    a, b = np.sort(a), np.sort(b)
    pts = np.concatenate([a, b])
    pts.sort(kind="stable")
    fa = np.searchsorted(a, pts, side="right") / len(a)
    fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.sum(np.abs(fa - fb)[:-1] * np.diff(pts)))


def _l1_smooth(a, F: Callable[[float], float]) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    n = len(a)
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=200)
    total = integrate.quad(lambda x: F(x), -np.inf, a[0], **opts)[0]
    total += integrate.quad(lambda x: 1.0 - F(x), a[-1], np.inf, **opts)[0]
    for k in range(1, n):
        lo, hi = a[k - 1], a[k]
        if hi <= lo:
            continue
        level = k / n
        flo, fhi = F(lo) - level, F(hi) - level
        pieces = [lo, hi]
        if flo < 0 < fhi:
            pieces = [lo, optimize.brentq(lambda x: F(x) - level, lo, hi, xtol=1e-14), hi]
        for p, q in zip(pieces, pieces[1:]):
            total += integrate.quad(lambda x: abs(F(x) - level), p, q, **opts)[0]
    return float(total)


def wasserstein1(sample, reference) -> float:
    """W1 distance, i.e. the L1 distance between distribution functions.

    ``reference`` is either a second sample (exact piecewise integration) or
    a callable CDF (adaptive quadrature between sample points, with the two
    infinite tails integrated separately).
    """
    a = np.asarray(sample, dtype=float)
    if not np.all(np.isfinite(a)) or a.size == 0:
        raise DomainError("sample must be non-empty and finite")
    if callable(reference):
        return _l1_smooth(a, lambda x: float(reference(x)))
    return _l1_steps(a, np.asarray(reference, dtype=float))


def gap_samples(traj: Trajectory, burn_in_time: float) -> np.ndarray:
    """Gaps from the snapshots taken at or after ``burn_in_time``; shape ``(m, n-1)``."""
    return traj.after(burn_in_time).gaps()


def exponential_sup_distance(samples) -> float:
    """Sup distance between the empirical CDF and the exponential fitted by its mean."""
    z = np.sort(np.asarray(samples, dtype=float))
    n = len(z)
    fit = 1.0 - np.exp(-z / np.mean(z))
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(hi - fit)), np.max(np.abs(fit - lo))))
