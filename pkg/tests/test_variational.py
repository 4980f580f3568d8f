import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kbl import ConfigError, ControlSpec, KillingFunction, TerminalMassFunctional, TimeGrid, laplace_mc, rate_frontier, varrep_check
from kbl.variational import (ConstantG, LaplaceReport, LinearThresholdG, SmoothBoundedG, default_varrep_suite,
                             frontier_envelope, golden_section, laplace_variational_upper, log_mean_exp_estimate,
                             random_g_family)


def test_golden_section():
    x, fx = golden_section(lambda v: (v - 0.3) ** 2 + 1, -2, 2)
    assert x == pytest.approx(0.3, abs=1e-6) and fx == pytest.approx(1.0)


def test_log_mean_exp():
    est, se = log_mean_exp_estimate(np.full(10, -3.0), 2)
    assert est == pytest.approx(1.5) and se == 0.0
    est, _ = log_mean_exp_estimate(np.log([1.0, 3.0]), 1)
    assert est == pytest.approx(-math.log(2))


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_linear_case_is_exact(alpha):
    r = varrep_check(LinearThresholdG(alpha))
    assert r.lhs == pytest.approx(math.log(1 + alpha), abs=1e-12)
    assert abs(r.gap) < 1e-5
    assert r.rate_star == pytest.approx(1 + alpha, abs=1e-3)
    assert abs(r.u_star) < 1e-3


def test_constant_case():
    r = varrep_check(ConstantG(0.3))
    assert r.lhs == pytest.approx(0.3) and r.rhs == pytest.approx(0.3)


def test_random_cases_respect_bound():
    for g in random_g_family(5, seed=7):
        r = varrep_check(g)
        assert r.gap >= -1e-6
        assert r.quadrature_error < 1e-6


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_smooth_bounded_is_bounded(seed):
    g = SmoothBoundedG.random(np.random.default_rng(seed))
    w = np.linspace(-10, 10, 41)[:, None]
    x = np.linspace(0, 30, 41)[None, :]
    v = g(w, x)
    assert np.all(np.isfinite(v)) and np.max(np.abs(v)) < 10


def test_default_suite():
    assert len(default_varrep_suite()) == 3
    assert len(default_varrep_suite(4)) == 7


def test_terminal_functional():
    F = TerminalMassFunctional(2.0, -0.5, 0.0, 1.0)
    assert F(0.1) == 0.0 and F(0.5) == 0.5 and F(0.9) == 1.0
    assert F.range() == (0.0, 1.0)
    assert TerminalMassFunctional.constant(0.7)(0.3) == 0.7


def test_laplace_constant_is_exact(const_zeta):
    g = TimeGrid(1.0, 10)
    est = laplace_mc(TerminalMassFunctional.constant(0.4), 50, 4, 0, zeta=const_zeta, grid=g)
    assert est.estimate == 0.4 and est.se == 0.0
    with pytest.raises(ConfigError):
        laplace_mc(TerminalMassFunctional(1.0), 50, 1, 0, zeta=const_zeta, grid=g)


def test_importance_sampling_is_consistent(const_zeta):
    # with a mild functional the plain and importance-sampled estimators agree
    g = TimeGrid(1.0, 20)
    F = TerminalMassFunctional(0.25, 0.0, 0.0, 1.0)
    plain = laplace_mc(F, 50, 400, 1, zeta=const_zeta, grid=g)
    tilted = laplace_mc(F, 50, 400, 1, zeta=const_zeta, grid=g, proposal=ControlSpec.constant([0.0], 1.2),
                        replica_offset=400)
    assert abs(plain.estimate - tilted.estimate) < 4 * math.hypot(plain.se, tilted.se)


def test_laplace_upper_bound_small(const_zeta):
    g = TimeGrid(1.0, 20)
    F = TerminalMassFunctional(1.0, 0.0, 0.0, 1.0)
    fam = [ControlSpec.zero()] + [ControlSpec.constant([0.0], r) for r in (1.5, 2.0)]
    rep = laplace_variational_upper(F, fam, 100, 60, 0, zeta=const_zeta, grid=g)
    assert not rep.violated
    assert rep.zero_control_upper >= rep.upper
    assert len(rep.scanned) == 3


def test_violation_flag():
    F = TerminalMassFunctional.constant(0.0)
    base = dict(F=F, n=10, best_control=ControlSpec.zero())
    assert LaplaceReport(mc=1.0, mc_se=0.01, upper=0.9, upper_se=0.01, **base).violated
    assert not LaplaceReport(mc=1.0, mc_se=0.1, upper=0.9, upper_se=0.0, **base).violated


def test_frontier(const_zeta):
    g = TimeGrid(1.0, 20)
    fam = [ControlSpec.constant([0.0], r) for r in (0.5, 1.0, 2.0)] + [ControlSpec.constant([0.5], 1.0)]
    certs = rate_frontier(fam, const_zeta, g, 5000, seed=2)
    zero = [c for c in certs if c.control.is_zero]
    assert len(zero) == 1 and zero[0].J == 0.0
    assert all(c.J > 0 for c in certs if not c.control.is_zero)
    env = frontier_envelope(certs, 0.02)
    assert all(j >= 0 for _, j, _ in env)
    assert len(env) <= len(certs)


def test_laplace_small_alpha_first_order(const_zeta):
    g = TimeGrid(1.0, 20)
    F = TerminalMassFunctional(0.01, 0.0, 0.0, 1.0)
    est = laplace_mc(F, 100, 200, 3, zeta=const_zeta, grid=g)
    assert abs(est.estimate - 0.01 * 0.5) < 3 * est.se + 1e-4


def test_laplace_jensen_bracket(const_zeta):
    g = TimeGrid(1.0, 20)
    est = laplace_mc(TerminalMassFunctional(1.0, 0.0, 0.0, 1.0), 500, 100, 5, zeta=const_zeta, grid=g)
    assert 0 <= est.estimate <= 0.5 + 3 * est.se + 0.01


def test_killing_tilt_beats_zero_control(const_zeta):
    g = TimeGrid(1.0, 20)
    F = TerminalMassFunctional(1.0, 0.0, 0.0, 1.0)
    fam = [ControlSpec.constant([0.0], r) for r in np.arange(1.0, 4.01, 0.25)]
    rep = laplace_variational_upper(F, fam, 500, 60, 1, zeta=const_zeta, grid=g)
    assert rep.gap < rep.zero_control_gap
    only_zero = laplace_variational_upper(TerminalMassFunctional.constant(0.3), [ControlSpec.zero()], 50, 4, 0,
                                          zeta=const_zeta, grid=g)
    assert abs(only_zero.gap) < 1e-9
