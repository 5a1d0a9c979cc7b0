"""Long-time structure of finite rank-based systems.

Global stability margins, explicit stationary laws in the equal-variance and
skew-symmetric cases, and the cluster/cloud decomposition that governs the
long-time behaviour when the system is not globally stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coefficients import CoefficientProfile
from .errors import DomainError, NoStationaryLawError, UnsupportedCaseError

MARGIN_TOL = 1e-12
DRIFT_TOL = 1e-9
VARIANCE_TOL = 1e-12


def _tol(values, tol):
    return 0 if all(isinstance(v, Fraction) for v in values) else tol


def _prefix(drifts) -> list:
    out = [0 * drifts[0]]
    for b in drifts:
        out.append(out[-1] + b)
    return out


@dataclass(frozen=True)
class StabilityReport:
    globally_stable: bool
    margins: tuple

    def as_dict(self) -> dict:
        return {"globally_stable": self.globally_stable, "margins": [float(m) for m in self.margins]}


def stability_margins(c: CoefficientProfile) -> tuple:
    """``alpha_m = sum_{k<=m} b_k - (m/n) sum_k b_k`` for ``m = 1..n-1``."""
    S = _prefix(c.drifts)
    n = c.n
    return tuple(S[m] - m * S[n] / n for m in range(1, n))


def check_global_stability(c: CoefficientProfile) -> StabilityReport:
    margins = stability_margins(c)
    tol = _tol(c.drifts, MARGIN_TOL)
    return StabilityReport(all(a > tol for a in margins), margins)


@dataclass(frozen=True)
class GapLaw:
    rates: tuple
    kind: str

    @property
    def means(self) -> tuple:
        return tuple(1.0 / r for r in self.rates)


def stationary_gap_law(c: CoefficientProfile) -> GapLaw:
    """Product-of-exponentials stationary law of the gaps.

    Rates are ``4 alpha_k / (sigma_k^2 + sigma_{k+1}^2)``, i.e. ``2 alpha_k /
    sigma^2`` with equal variances. Only the equal-variance and the
    skew-symmetric cases (constant variance increments) are explicit.
    """
    report = check_global_stability(c)
    if not report.globally_stable:
        raise NoStationaryLawError("system is not globally stable; the gaps have no stationary law")
    var = c.variances
    inc = np.diff(var)
    scale = max(1.0, float(np.max(var)))
    if c.n > 1 and np.all(np.abs(var - var[0]) <= VARIANCE_TOL * scale):
        kind = "equal-variance"
    elif c.n > 1 and np.all(np.abs(inc - inc[0]) <= VARIANCE_TOL * scale):
        kind = "skew-symmetric"
    elif c.n == 1:
        kind = "equal-variance"
    else:
        raise UnsupportedCaseError(
            "variances are neither equal nor skew-symmetric; the stationary gap law is not explicit"
        )
    alpha = np.array([float(a) for a in report.margins])
    rates = 4.0 * alpha / (var[:-1] + var[1:])
    return GapLaw(tuple(rates.tolist()), kind)


def potential_V(c: CoefficientProfile, x) -> float:
    """``V(x) = -sum_k b_k x_(k)`` with ``x_(1) <= ... <= x_(n)``."""
    xs = np.sort(np.asarray(x, dtype=float))
    if xs.shape != (c.n,):
        raise DomainError(f"expected a point in R^{c.n}")
    return float(-np.dot(c.drift_array, xs))


def _common_variance(c: CoefficientProfile) -> float:
    var = c.variances
    if np.any(np.abs(var - var[0]) > VARIANCE_TOL * max(1.0, float(var[0]))):
        raise UnsupportedCaseError("the explicit centred density needs equal diffusion coefficients")
    return float(var[0])


def stationary_centered_density(c: CoefficientProfile, x) -> float:
    """Unnormalised stationary density ``exp(-(2/sigma^2) V(x))`` on the zero-sum hyperplane."""
    s2 = _common_variance(c)
    if not check_global_stability(c).globally_stable:
        raise NoStationaryLawError("normaliser is infinite: system not globally stable")
    x = np.asarray(x, dtype=float)
    if abs(float(np.sum(x))) > 1e-9 * c.n:
        raise DomainError("point does not lie on the zero-sum hyperplane")
    return math.exp(-2.0 / s2 * potential_V(c, x))


def estimate_normalizer(c: CoefficientProfile, n_samples: int = 200_000, seed: int = 0, scale=None):
    """Monte Carlo estimate of the centred-density normaliser.

    Importance sampling from an isotropic Gaussian on the zero-sum hyperplane
    (intrinsic coordinates in an orthonormal basis). Returns ``(estimate,
    standard_error)``.
    """
    s2 = _common_variance(c)
    n = c.n
    if n == 1:
        return 1.0, 0.0
    if not check_global_stability(c).globally_stable:
        raise NoStationaryLawError("normaliser is infinite: system not globally stable")
    # orthonormal basis of {sum x = 0}
    q, _ = np.linalg.qr(np.eye(n) - 1.0 / n)
    basis = q[:, : n - 1]
    if scale is None:
        law = stationary_gap_law(c)
        scale = 2.0 * max(law.means) * math.sqrt(n)
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n_samples, n - 1)) * scale
    x = z @ basis.T
    xs = np.sort(x, axis=1)
    logf = 2.0 / s2 * (xs @ c.drift_array)
    logq = -0.5 * np.sum(z**2, axis=1) / scale**2 - (n - 1) * math.log(scale * math.sqrt(2 * math.pi))
    w = np.exp(logf - logq)
    return float(np.mean(w)), float(np.std(w, ddof=1) / math.sqrt(n_samples))


@dataclass(frozen=True)
class ClusterPartition:
    """Clusters as 0-based inclusive rank intervals, grouped into clouds.

    ``clouds[j]`` is an inclusive interval of cluster indices.
    """

    clusters: tuple
    cluster_avg_drifts: tuple
    clouds: tuple
    cloud_avg_drifts: tuple

    @property
    def D(self) -> int:
        return len(self.clusters)


def _above_chord(S, lo, mid, hi, tol) -> bool:
    """Is the partial-sum point at ``mid`` strictly above the chord from ``lo`` to ``hi``?"""
    return (S[mid] - S[lo]) - (mid - lo) * (S[hi] - S[lo]) / (hi - lo) > tol


def cluster_partition(c: CoefficientProfile, drift_tol: float = DRIFT_TOL) -> ClusterPartition:
    """Split ranks into maximal locally stable intervals and group them into clouds.

    An interval is locally stable iff the partial-sum polygon ``m -> S_m`` lies
    strictly above its chord at every interior split, so the clusters are
    the pieces of the greatest convex minorant of the polygon, cut at every
    polygon vertex that touches the minorant (lower hull, collinear points
    kept).
    """
    S = _prefix(c.drifts)
    n = c.n
    tol = _tol(c.drifts, MARGIN_TOL)
    hull = []
    for m in range(n + 1):
        while len(hull) >= 2 and _above_chord(S, hull[-2], hull[-1], m, tol):
            hull.pop()
        hull.append(m)
    clusters = tuple((a, b - 1) for a, b in zip(hull, hull[1:]))
    avgs = tuple((S[b + 1] - S[a]) / (b + 1 - a) for a, b in clusters)
    dtol = _tol(c.drifts, drift_tol)
    clouds, cloud_avgs = [], []
    start = 0
    for j in range(1, len(clusters) + 1):
        if j == len(clusters) or abs(avgs[j] - avgs[j - 1]) > dtol:
            clouds.append((start, j - 1))
            lo, hi = clusters[start][0], clusters[j - 1][1]
            cloud_avgs.append((S[hi + 1] - S[lo]) / (hi + 1 - lo))
            start = j
    return ClusterPartition(clusters, avgs, tuple(clouds), tuple(cloud_avgs))


@dataclass(frozen=True)
class CloudRecord:
    ranks: tuple  # 1-based inclusive
    avg_drift: float
    n_clusters: int
    label: str


@dataclass(frozen=True)
class LongTimeReport:
    clouds: tuple
    globally_stable: bool
    separation: str = field(
        default="distinct clouds drift apart and stop colliding after an almost surely finite time"
    )

    def to_text(self) -> str:
        """One JSON record per cloud, preceded by a header record."""
        head = {
            "globally_stable": self.globally_stable,
            "n_clouds": len(self.clouds),
            "separation": self.separation if len(self.clouds) > 1 else "single cloud",
        }
        lines = [json.dumps(head)]
        for k, r in enumerate(self.clouds, 1):
            lines.append(
                json.dumps(
                    {
                        "cloud": k,
                        "ranks": [r.ranks[0], r.ranks[1]],
                        "avg_drift": float(r.avg_drift),
                        "clusters": r.n_clusters,
                        "label": r.label,
                    }
                )
            )
        return "\n".join(lines) + "\n"


def classify_long_time(c: CoefficientProfile, drift_tol: float = DRIFT_TOL) -> LongTimeReport:
    part = cluster_partition(c, drift_tol)
    records = []
    for (a, b), avg in zip(part.clouds, part.cloud_avg_drifts):
        lo, hi = part.clusters[a][0], part.clusters[b][1]
        k = b - a + 1
        records.append(CloudRecord((lo + 1, hi + 1), avg, k, "ergodic" if k == 1 else "null-recurrent"))
    return LongTimeReport(tuple(records), part.D == 1)

