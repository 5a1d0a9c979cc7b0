from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankdiff.coefficients import (
    CoefficientProfile,
    MeanFieldProfile,
    PiecewiseLinear,
    discretize_meanfield,
    flux_B,
    make_atlas,
    mean_drift,
    smoothed_atlas_profile,
    viscosity_A,
)
from rankdiff.errors import DomainError, InvalidParameterError, InvalidProfileError

LOGISTIC = MeanFieldProfile.linear_decreasing(2)


def test_make_atlas_examples():
    c = make_atlas(3, 1)
    assert c.drifts == (3, 0, 0) and c.diffusions == (1, 1, 1)
    assert make_atlas(1, 1).drifts == (1,)
    c = make_atlas(2, 0.5)
    assert c.drift_array.tolist() == [1.0, 0.0] and c.diffusion_array.tolist() == [1.0, 1.0]


@pytest.mark.parametrize("n,gamma", [(0, 1), (-2, 1), (3, 0), (3, -1)])
def test_make_atlas_rejects(n, gamma):
    with pytest.raises(InvalidParameterError):
        make_atlas(n, gamma)


def test_profile_validation():
    with pytest.raises(InvalidProfileError):
        CoefficientProfile((1, 2), (1,))
    with pytest.raises(InvalidProfileError):
        CoefficientProfile((1, 2), (1, 0))
    with pytest.raises(InvalidProfileError):
        MeanFieldProfile.from_knots(0, [(0, 1), (1, -0.5)])
    with pytest.raises(InvalidProfileError):
        PiecewiseLinear([0, 0.5], [1, 2])  # does not reach 1
    with pytest.raises(InvalidProfileError):
        PiecewiseLinear([0, 0.5, 0.5, 1], [1, 2, 3, 4])


def test_discretize_examples():
    c = discretize_meanfield(LOGISTIC, 2)
    assert c.drift_array.tolist() == [1.0, 0.0] and c.diffusion_array.tolist() == [1.0, 1.0]
    ident = MeanFieldProfile.from_knots([(0, 0), (1, 1)], 1)
    assert discretize_meanfield(ident, 4).drift_array.tolist() == [0.25, 0.5, 0.75, 1.0]
    c = discretize_meanfield(LOGISTIC, 1000)
    assert c.drift_array[-1] == 0.0
    assert c.drift_array[0] == pytest.approx(1.998, abs=1e-12)


def test_flux_and_viscosity_examples():
    assert flux_B(LOGISTIC, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert flux_B(LOGISTIC, 0.0) == 0.0
    assert flux_B(LOGISTIC, 0.5) == pytest.approx(0.75, abs=1e-15)
    unit = MeanFieldProfile.from_knots(0, 1)
    assert viscosity_A(unit, 1.0) == pytest.approx(0.5)
    assert viscosity_A(unit, 0.3) == pytest.approx(0.15)
    ramp = MeanFieldProfile.from_knots(0, [(0, 1), (1, 2)])
    assert viscosity_A(ramp, 1.0) == pytest.approx(0.75)
    with pytest.raises(DomainError):
        flux_B(LOGISTIC, 1.5)
    with pytest.raises(DomainError):
        LOGISTIC.b(-0.1)


def test_mean_drift_examples():
    assert mean_drift(LOGISTIC) == 1
    assert mean_drift(MeanFieldProfile.from_knots(0, 1)) == 0
    assert mean_drift(MeanFieldProfile.from_knots([(0, 0), (1, 1)], 1)) == Fraction(1, 2)


def test_decimal_strings_are_exact():
    mf = MeanFieldProfile.from_knots([("0", "0.3"), ("1", "0.1")], "1")
    assert mean_drift(mf) == Fraction(1, 5)
    assert mf.drift.at_one() == Fraction(1, 10)


def test_smoothed_atlas_has_mass_gamma():
    mf = smoothed_atlas_profile(1.5, 0.1)
    assert float(mean_drift(mf)) == pytest.approx(1.5)
    assert mf.b(0.2) == 0.0
    with pytest.raises(InvalidParameterError):
        smoothed_atlas_profile(1.0, 0.0)


knots_values = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8)


@st.composite
def pl_tables(draw):
    vals = draw(knots_values)
    inner = sorted(set(draw(st.lists(st.floats(0.01, 0.99), min_size=len(vals) - 2, max_size=len(vals) - 2))))
    knots = [0.0, *inner, 1.0]
    return knots, vals[: len(knots)]


@given(pl_tables(), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_flux_matches_trapezoid_oracle(table, u):
    knots, vals = table
    p = PiecewiseLinear(knots, vals)
    # trapezoid is exact on each linear piece once the knots are grid points
    grid = np.unique(np.concatenate([np.linspace(0, u, 2001), [k for k in knots if k < u], [u]]))
    oracle = np.trapezoid(np.interp(grid, knots, vals), grid)
    assert abs(float(p.antiderivative(u)) - oracle) <= 1e-12 * max(1.0, abs(oracle)) * 10


@given(pl_tables(), st.integers(1, 400))
@settings(max_examples=200, deadline=None)
def test_riemann_average_converges_at_rate_L_over_n(table, n):
    knots, vals = table
    mf = MeanFieldProfile(PiecewiseLinear(knots, vals), PiecewiseLinear.constant(1.0))
    c = discretize_meanfield(mf, n)
    L = mf.drift.lipschitz()
    assert abs(c.drift_array.mean() - float(mean_drift(mf))) <= L / n + 1e-12


@given(pl_tables(), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_viscosity_strictly_increasing(table, u, v):
    knots, vals = table
    s2 = PiecewiseLinear(knots, [abs(x) + 0.1 for x in vals])
    mf = MeanFieldProfile(PiecewiseLinear.constant(0.0), s2)
    lo, hi = min(u, v), max(u, v)
    if hi > lo:
        assert viscosity_A(mf, hi) > viscosity_A(mf, lo)
    pos = MeanFieldProfile(PiecewiseLinear(knots, [abs(x) for x in vals]), s2)
    assert flux_B(pos, hi) >= flux_B(pos, lo)
