import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kbl import KillingFunction, NumericError, TimeGrid, gaussian_expectation, limit_observable, solve_limit
from kbl.analytic import gaussian_expectation_estimate


def test_constant_zeta_closed_form():
    g = TimeGrid(1.0, 200)
    prof = solve_limit(KillingFunction.constant(1.0), g)
    assert np.allclose(prof.a, 1 / (1 + g.times), atol=1e-14)
    assert prof.a[-1] == pytest.approx(0.5)


def test_abs_b_matches_formula():
    z = KillingFunction.abs_power(1.0)
    for t in (0.1, 0.5, 1.0, 2.0):
        assert gaussian_expectation(z, t) == pytest.approx(math.sqrt(2 * t / math.pi), rel=1e-14)


def test_closed_form_vs_quadrature_vs_mc():
    z = KillingFunction.abs_power(1.5)
    exact = gaussian_expectation(z, 0.8, 2)
    q = gaussian_expectation(z, 0.8, 2, method="quadrature", nodes=80)
    assert q == pytest.approx(exact, rel=2e-3)
    est = gaussian_expectation_estimate(z, 0.8, 3, method="mc", mc_samples=200000)
    assert abs(est.value - gaussian_expectation(z, 0.8, 3)) < 5 * est.stderr


def test_custom_and_time_zero():
    z = KillingFunction.custom(lambda x: 1 + x[..., 0] ** 2 / 4, 1.0, 1.0, "q")
    assert gaussian_expectation(z, 2.0) == pytest.approx(1.5)
    assert gaussian_expectation(z, 0.0) == 1.0


def test_abs_mass_value():
    prof = solve_limit(KillingFunction.abs_power(1.0), TimeGrid(1.0, 200))
    exact = 1 / (1 + (2 / 3) * math.sqrt(2 / math.pi))
    assert prof.a[-1] == pytest.approx(exact, abs=1e-4)
    assert prof.a[-1] == pytest.approx(0.6528, abs=1e-3)


@pytest.mark.parametrize("zeta", [KillingFunction.constant(1.0), KillingFunction.abs_power(1.0),
                                  KillingFunction.abs_power(1.5)])
def test_dual_formula_and_ode_agree(zeta):
    g = TimeGrid(1.0, 200)
    prof = solve_limit(zeta, g)
    assert prof.dual_formula_gap <= 10 * g.dt**2
    assert prof.ode_discrepancy <= 10 * g.dt**2


def test_strict_check_raises_on_fine_grid_singularity():
    # the sqrt(t) singularity of b at t = 0 limits RK4 accuracy on very fine grids
    with pytest.raises(NumericError):
        solve_limit(KillingFunction.abs_power(1.0), TimeGrid(1.0, 20000))
    prof = solve_limit(KillingFunction.abs_power(1.0), TimeGrid(1.0, 20000), strict=False)
    assert prof.a[-1] == pytest.approx(0.6528, abs=1e-3)


def test_strict_check_flags_coarse_grids():
    with pytest.raises(NumericError):
        solve_limit(KillingFunction.constant(2.0), TimeGrid(2.0, 1))


def test_observable():
    prof = solve_limit(KillingFunction.constant(1.0), TimeGrid(1.0, 10))
    assert limit_observable(prof, lambda x: np.ones(len(x)), 1.0) == pytest.approx(0.5)
    assert limit_observable(prof, lambda x: x[:, 0] ** 2, 1.0) == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.0, 5.0), T=st.floats(0.1, 4.0), m=st.integers(1, 60))
def test_mass_monotone_and_bounded(c, T, m):
    prof = solve_limit(KillingFunction.constant(c), TimeGrid(T, m), strict=False)
    assert prof.a[0] == 1.0
    assert np.all(np.diff(prof.a) <= 1e-15)
    assert np.all(prof.a > 0)
    assert np.allclose(prof.a, 1 / (1 + c * prof.grid.times))
