import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import clusters_brute_force, globally_stable_direct
from rankdiff.coefficients import CoefficientProfile, make_atlas
from rankdiff.errors import DomainError, NoStationaryLawError, UnsupportedCaseError
from rankdiff.stability import (
    check_global_stability,
    classify_long_time,
    cluster_partition,
    estimate_normalizer,
    potential_V,
    stationary_centered_density,
    stationary_gap_law,
)


def prof(drifts, diff=None):
    return CoefficientProfile(tuple(drifts), tuple(diff or [1] * len(drifts)))


def test_stability_examples():
    r = check_global_stability(make_atlas(3, 1))
    assert r.globally_stable and r.margins == (2, 1)
    r = check_global_stability(prof([0, 1]))
    assert not r.globally_stable and r.margins == (Fraction(-1, 2),)
    r = check_global_stability(prof([1, 1, 1]))
    assert not r.globally_stable and r.margins == (0, 0)
    r = check_global_stability(prof([5]))
    assert r.globally_stable and r.margins == ()


def test_margin_at_float_tolerance_is_unstable():
    assert not check_global_stability(prof([1.0, 1.0 - 1e-13])).globally_stable
    assert check_global_stability(prof([1.0, 1.0 - 1e-9])).globally_stable


def test_gap_law_examples():
    law = stationary_gap_law(make_atlas(2, 1))
    assert law.rates == (2.0,) and law.means == (0.5,) and law.kind == "equal-variance"
    law = stationary_gap_law(make_atlas(3, 1))
    assert law.rates == (4.0, 2.0) and law.means == (0.25, 0.5)
    assert stationary_gap_law(prof([1, 0])).rates == (1.0,)


def test_gap_law_skew_symmetric_and_refusals():
    # variances 1, 2, 3: constant increments
    c = prof([3, 0, 0], [1, math.sqrt(2), math.sqrt(3)])
    law = stationary_gap_law(c)
    assert law.kind == "skew-symmetric"
    assert law.rates == pytest.approx((4 * 2 / 3, 4 * 1 / 5))
    with pytest.raises(UnsupportedCaseError):
        stationary_gap_law(prof([3, 0, 0], [1, 2, 1]))
    with pytest.raises(NoStationaryLawError):
        stationary_gap_law(prof([0, 1]))


def test_potential_examples():
    c = prof([2, 0])
    assert potential_V(c, [0, 1]) == 0.0
    assert potential_V(c, [1, 0]) == 0.0
    assert potential_V(make_atlas(3, 1), [-1, 0, 1]) == 3.0


def test_centered_density_examples():
    c = prof([2, 0])
    assert stationary_centered_density(make_atlas(4, 1), [0, 0, 0, 0]) == 1.0
    for d in (0.0, 0.3, 2.0):
        assert stationary_centered_density(c, [-d / 2, d / 2]) == pytest.approx(math.exp(-2 * d))
        assert stationary_centered_density(c, [d / 2, -d / 2]) == pytest.approx(math.exp(-2 * d))
    with pytest.raises(DomainError):
        stationary_centered_density(c, [0.0, 1.0])
    with pytest.raises(NoStationaryLawError):
        stationary_centered_density(prof([0, 1]), [0.0, 0.0])


def _closed_form_normalizer(c):
    # density exp(-2/s2 sum alpha_j z_j) in gap coordinates; the map from
    # (x(1)..x(n)) restricted to sum 0 onto the gaps has Jacobian sqrt(det A^T A)
    n = c.n
    alpha = np.array([float(a) for a in check_global_stability(c).margins])
    s2 = float(c.variances[0])
    A = np.zeros((n, n - 1))
    for j in range(n - 1):
        A[j + 1 :, j] = 1.0
    A -= A.mean(axis=0)
    return math.factorial(n) * math.sqrt(np.linalg.det(A.T @ A)) * np.prod(s2 / (2 * alpha))


@pytest.mark.parametrize("drifts", [[2, 0], [3, 0, 0], [2, 1, 0]])
def test_monte_carlo_normalizer_matches_closed_form(drifts):
    c = prof(drifts)
    est, se = estimate_normalizer(c, 400_000, seed=7)
    exact = _closed_form_normalizer(c)
    assert abs(est - exact) < 4 * se + 1e-3 * exact


def test_normalizer_n2_value():
    assert _closed_form_normalizer(prof([2, 0])) == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_product_of_exponentials_matches_density_on_slices():
    c = prof([3, 0.5, 0.25, 0])
    rates = np.array(stationary_gap_law(c).rates)
    rng = np.random.default_rng(3)
    diffs = []
    for _ in range(50):
        z = rng.exponential(1.0, 3)
        x = np.concatenate([[0.0], np.cumsum(z)])
        x -= x.mean()
        diffs.append(math.log(stationary_centered_density(c, x)) + float(rates @ z))
    assert np.ptp(diffs) < 1e-9


def test_cluster_examples():
    p = cluster_partition(prof([1, 0]))
    assert p.clusters == ((0, 1),) and p.D == 1 and len(p.clouds) == 1
    p = cluster_partition(prof([0, 1]))
    assert p.clusters == ((0, 0), (1, 1)) and p.cluster_avg_drifts == (0, 1) and len(p.clouds) == 2
    p = cluster_partition(prof([1, 1]))
    assert p.clusters == ((0, 0), (1, 1)) and p.clouds == ((0, 1),)
    p = cluster_partition(prof([1, 1, 0]))
    assert p.clusters == ((0, 2),)


def test_long_time_report():
    rep = classify_long_time(prof([1, 1]))
    assert [r.label for r in rep.clouds] == ["null-recurrent"]
    rep = classify_long_time(prof([0, 1]))
    assert len(rep.clouds) == 2 and all(r.label == "ergodic" for r in rep.clouds)
    lines = [json.loads(s) for s in rep.to_text().splitlines()]
    assert lines[0]["n_clouds"] == 2 and lines[1]["ranks"] == [1, 1] and lines[2]["ranks"] == [2, 2]
    rep = classify_long_time(prof([1, 1, 0]))
    assert rep.globally_stable and rep.clouds[0].label == "ergodic"


fractions = st.integers(-6, 6).map(Fraction)
floats = st.floats(-3, 3, allow_nan=False)


@given(st.lists(fractions, min_size=1, max_size=10))
@settings(max_examples=400, deadline=None)
def test_margin_form_equals_direct_condition_exact(drifts):
    assert check_global_stability(prof(drifts)).globally_stable == globally_stable_direct(drifts)


@given(st.lists(floats, min_size=1, max_size=10))
@settings(max_examples=400, deadline=None)
def test_margin_form_equals_direct_condition_float(drifts):
    r = check_global_stability(prof(drifts))
    if min((abs(float(a)) for a in r.margins), default=1.0) > 1e-9:
        assert r.globally_stable == globally_stable_direct(drifts)


def _check_partition(drifts):
    p = cluster_partition(prof(drifts))
    assert list(p.clusters) == clusters_brute_force(drifts)
    # partition of 0..n-1 into consecutive intervals
    assert p.clusters[0][0] == 0 and p.clusters[-1][1] == len(drifts) - 1
    assert all(b + 1 == a for (_, b), (a, _) in zip(p.clusters, p.clusters[1:]))
    avgs = [float(a) for a in p.cluster_avg_drifts]
    assert all(x <= y + 1e-9 for x, y in zip(avgs, avgs[1:]))
    cavgs = [float(a) for a in p.cloud_avg_drifts]
    assert all(x < y for x, y in zip(cavgs, cavgs[1:]))
    assert (p.D == 1) == check_global_stability(prof(drifts)).globally_stable


@given(st.lists(fractions, min_size=1, max_size=8))
@settings(max_examples=300, deadline=None)
def test_cluster_partition_matches_brute_force_exact(drifts):
    _check_partition(drifts)


@given(st.lists(floats, min_size=1, max_size=8))
@settings(max_examples=300, deadline=None)
def test_cluster_partition_matches_brute_force_float(drifts):
    _check_partition(drifts)


@given(st.lists(floats, min_size=2, max_size=6), st.randoms(use_true_random=False))
@settings(max_examples=100, deadline=None)
def test_density_permutation_invariant(drifts, rnd):
    drifts = sorted(drifts, reverse=True)
    drifts[0] += 1.0  # makes the profile globally stable
    c = prof(drifts)
    x = np.array([rnd.uniform(-1, 1) for _ in drifts])
    x -= x.mean()
    y = x.copy()
    rnd.shuffle(y)
    y -= y.mean()
    assert stationary_centered_density(c, x) == pytest.approx(stationary_centered_density(c, y), rel=1e-12)
