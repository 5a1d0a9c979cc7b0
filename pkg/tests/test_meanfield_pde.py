import numpy as np
import pytest
from scipy import special, stats

from rankdiff.coefficients import MeanFieldProfile
from rankdiff.errors import (
    DomainError,
    IncompatibleGridError,
    InvalidParameterError,
    SchemeFailureError,
    TruncationError,
)
from rankdiff.laws import Gaussian, PointMass, Uniform
from rankdiff.meanfield_pde import (
    GridCDF,
    choose_theta,
    evolve,
    grid_mean,
    init_grid,
    l1_distance,
    quantile,
    read_grid,
    write_grid,
)

HEAT = MeanFieldProfile.from_knots(0, 1)
LOGISTIC = MeanFieldProfile.linear_decreasing(2)


def logistic(x):
    return special.expit(2 * np.asarray(x))


def test_init_grid_examples():
    g = init_grid(PointMass(0.0), -5, 5, 100)
    assert np.all(g.values[g.x < 0] == 0) and np.all(g.values[g.x > 0] == 1)
    g = init_grid(Uniform(0, 1), -1, 2, 300)
    inside = (g.x > 0) & (g.x < 1)
    assert np.allclose(g.values[inside], g.x[inside])
    g = init_grid(Gaussian(0, 1), -10, 10, 2001)
    assert g.values[1000] == pytest.approx(0.5)


def test_init_grid_truncation():
    with pytest.raises(TruncationError) as info:
        init_grid(Gaussian(0, 1), -3, 10, 100)
    assert info.value.mass_deficit == pytest.approx(stats.norm.cdf(-3))
    with pytest.raises(InvalidParameterError):
        init_grid(Gaussian(0, 1), -10, 10, 1)


def test_heat_kernel_second_order():
    errs = []
    for nx in (500, 1000, 2000):
        g = evolve(init_grid(Gaussian(0, 1), -10, 10, nx), HEAT, 1.0)
        errs.append(l1_distance(g, lambda x: stats.norm.cdf(x, scale=np.sqrt(2.0))))
    assert errs[-1] < 2e-3
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_constant_drift_is_a_translation():
    c = 0.7
    shifted = MeanFieldProfile.from_knots(c, 1)
    a = evolve(init_grid(Gaussian(0, 1), -10, 12, 2200), shifted, 1.0)
    assert l1_distance(a, lambda x: stats.norm.cdf(x - c, scale=np.sqrt(2.0))) < 2e-3
    b = evolve(init_grid(Gaussian(0, 1), -10, 12, 2200), HEAT, 1.0)
    assert l1_distance(a, lambda x: b.interp(x - c)) < 2e-3


def test_logistic_wave_is_translated():
    g = GridCDF(-12, 22, np.zeros(2000))
    g = GridCDF(-12, 22, logistic(g.x))
    out = evolve(g, LOGISTIC, 3.0)
    assert l1_distance(out, lambda x: logistic(x - 3.0)) < 5e-3


def test_monotone_range_and_comparison():
    lo = init_grid(Gaussian(0.5, 1), -12, 14, 1000)
    hi = init_grid(Gaussian(-0.5, 1), -12, 14, 1000)
    assert np.all(lo.values <= hi.values)
    for t in (0.5, 1.0, 2.0):
        lo, hi = evolve(lo, LOGISTIC, t), evolve(hi, LOGISTIC, t)
        for g in (lo, hi):
            assert np.all(np.diff(g.values) >= -1e-10)
            assert g.values.min() >= 0 and g.values.max() <= 1
        assert np.all(lo.values <= hi.values + 1e-12)


def test_grid_mean_transport():
    g = init_grid(Gaussian(0, 1), -12, 22, 2000)
    m0 = grid_mean(g)
    for t in (2.0, 4.0):
        g = evolve(g, LOGISTIC, t)
        assert (grid_mean(g) - m0) / t == pytest.approx(1.0, abs=g.dx)


def test_oversized_step_is_detected():
    # four times the stable step on the pure heat equation
    g = init_grid(PointMass(0.0), -10, 10, 400)
    with pytest.raises(SchemeFailureError):
        evolve(g, HEAT, 0.2, theta=0.0, safety=4.0)


def test_boundary_leak_is_an_error():
    g = init_grid(Gaussian(0, 1), -8, 8, 400)
    with pytest.raises(TruncationError):
        evolve(g, LOGISTIC, 6.0)


def test_evolve_argument_checks():
    g = init_grid(Gaussian(0, 1), -8, 8, 100)
    with pytest.raises(InvalidParameterError):
        evolve(evolve(g, HEAT, 1.0), HEAT, 0.5)
    with pytest.raises(InvalidParameterError):
        evolve(g, HEAT, 1.0, theta=1.5)
    assert evolve(g, HEAT, 0.0) is g


def test_theta_choice():
    assert choose_theta(HEAT, 0.01) == 0.0
    assert choose_theta(LOGISTIC, 0.01) == 0.0
    assert choose_theta(LOGISTIC, 1.0) == pytest.approx(0.5)
    assert choose_theta(MeanFieldProfile.from_knots(0, 1e-6), 1.0) == 0.0
    assert choose_theta(MeanFieldProfile.from_knots(1, 1e-6), 1.0) == pytest.approx(1 - 1e-6)


def test_quantile_examples():
    g = GridCDF(-10, 10, logistic(GridCDF(-10, 10, np.zeros(2000)).x))
    assert abs(quantile(g, 0.5)) <= g.dx
    step_g = init_grid(PointMass(0.0), -5, 5, 1000)
    assert np.all(np.abs(quantile(step_g, np.array([0.1, 0.5, 0.9]))) <= step_g.dx)
    xs = np.linspace(-3, 3, 25)
    assert np.allclose(quantile(g, logistic(xs)), xs, atol=g.dx)
    with pytest.raises(DomainError):
        quantile(g, 1.0)


def test_l1_examples():
    a = init_grid(PointMass(0.0), -5, 5, 1000)
    assert l1_distance(a, a) == 0.0
    d = 1.3
    b = init_grid(PointMass(d), -5, 5, 1000)
    assert l1_distance(a, b) == pytest.approx(d, abs=a.dx)
    g = GridCDF(-15, 15, logistic(GridCDF(-15, 15, np.zeros(3000)).x))
    assert l1_distance(g, lambda x: logistic(x - 1)) == pytest.approx(1.0, abs=2 * g.dx)
    other = init_grid(PointMass(0.0), -5, 5, 500)
    with pytest.raises(IncompatibleGridError):
        l1_distance(a, other)
    assert l1_distance(a, other, resample=True) < 2 * a.dx


def test_grid_roundtrip(tmp_path):
    g = evolve(init_grid(Gaussian(0, 1), -8, 8, 200), HEAT, 0.5)
    write_grid(g, tmp_path / "g.csv")
    h = read_grid(tmp_path / "g.csv")
    assert h.same_grid(g) and np.array_equal(h.values, g.values) and h.t == g.t
