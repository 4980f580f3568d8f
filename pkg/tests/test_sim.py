import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kbl import (AffineFeedback, ConfigError, ControlSpec, DomainError, ExpThreshold, KillingFunction,
                 PiecewiseHazard, ReplicaSpec, TimeDependentDrift, TimeGrid, entropy_exp, run_replicas,
                 simulate_controlled, simulate_uncontrolled)
from kbl.sim import resolve_kills


def _constant_kill_oracle(thresholds, c, T):
    """Closed-form kill times for constant zeta: between kills H grows at rate c * alive / n."""
    n = len(thresholds)
    order = np.argsort(thresholds, kind="stable")
    times = np.full(n, np.inf)
    t, h = 0.0, 0.0
    for j, i in enumerate(order):
        rate = c * (n - j) / n
        t += (thresholds[i] - h) / rate
        h = thresholds[i]
        if t > T:
            break
        times[i] = t
    return times


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_kill_times_match_constant_oracle(c):
    g = TimeGrid(1.0, 7)
    zeta = KillingFunction.constant(c)
    _, ens = simulate_uncontrolled(400, 1, g, zeta, seed=5, replica=2)
    oracle = _constant_kill_oracle(ens.thresholds, c, g.T)
    killed = np.isfinite(oracle)
    assert np.array_equal(killed, np.isfinite(ens.kill_times) & (ens.kill_times <= g.T))
    assert np.allclose(ens.kill_times[killed], oracle[killed], rtol=1e-10, atol=1e-12)


def test_constant_zeta_independent_of_step_count():
    zeta = KillingFunction.constant(1.0)
    from kbl.sim import controlled_paths
    # same thresholds on both grids, so kill times must agree
    g1, g2 = TimeGrid(1.0, 4), TimeGrid(1.0, 13)
    th = controlled_paths(ControlSpec.zero(), 300, 1, g1, 1, 0)[1]
    k1 = resolve_kills(None, th, g1, zeta)[4]
    k2 = resolve_kills(None, th, g2, zeta)[4]
    done = k1 <= 1.0
    assert np.array_equal(done, k2 <= 1.0)
    assert np.allclose(k1[done], k2[done], rtol=1e-12)


def test_single_particle_kill_rule():
    g = TimeGrid(2.0, 10)
    zeta = KillingFunction.constant(1.0)
    H, zmean, count, death, ktime = resolve_kills(None, np.array([0.7]), g, zeta)
    assert ktime[0] == pytest.approx(0.7)
    assert death[0] == 4  # alive at t=0.6 (k=3), dead at t=0.8 (k=4)
    assert H[-1] == pytest.approx(0.7)
    _, _, _, death, ktime = resolve_kills(None, np.array([5.0]), g, zeta)
    assert death[0] == g.m + 1
    assert not ktime[0] <= g.T


def test_ensemble_consistency_abs(abs_zeta):
    g = TimeGrid(1.0, 40)
    path, ens = simulate_uncontrolled(2000, 2, g, abs_zeta, 3)
    H = path.hazard.H
    assert path.hazard.is_valid()
    assert np.all(np.diff(path.mass) <= 0) and path.mass[0] == 1
    # alive exactly when threshold exceeds the accumulated hazard
    assert np.array_equal(ens.alive, ens.thresholds[:, None] > H[None, :])
    assert np.allclose(path.mass, ens.alive.mean(axis=0))
    # hazard increments bounded by the left-endpoint rate
    assert np.all(np.diff(H) <= g.dt * path.zeta_mean[:-1] + 1e-12)


def test_zero_control_reproduces_uncontrolled(abs_zeta, unit_grid):
    p0, e0 = simulate_uncontrolled(500, 1, unit_grid, abs_zeta, 8, 3)
    p1, e1, ledger = simulate_controlled(500, 1, unit_grid, abs_zeta, ControlSpec.zero(), 8, 3)
    assert np.array_equal(p0.mass, p1.mass) and np.array_equal(e0.positions, e1.positions)
    assert ledger.total == 0.0 and ledger.log_likelihood_ratio == 0.0


def test_constant_drift_shifts_paths(const_zeta, unit_grid):
    ctrl = ControlSpec.constant([0.8], 1.0)
    _, ens, ledger = simulate_controlled(20000, 1, unit_grid, const_zeta, ctrl, 2)
    assert ens.positions[:, -1, 0].mean() == pytest.approx(0.8, abs=0.03)
    assert ledger.drift_cost == pytest.approx(0.5 * 0.64)
    assert ledger.entropy_cost == 0.0


def test_rate_control_changes_threshold_mean(const_zeta, unit_grid):
    _, ens, ledger = simulate_controlled(20000, 1, unit_grid, const_zeta, ControlSpec.constant([0.0], 2.0), 2)
    assert ens.thresholds.mean() == pytest.approx(0.5, abs=0.015)
    assert ledger.entropy_cost == pytest.approx(math.log(2) - 0.5)


def test_likelihood_ratio_has_unit_mean(unit_grid):
    from kbl.sim import controlled_paths
    for ctrl in (ControlSpec.constant([0.5], 1.5),
                 ControlSpec(AffineFeedback(np.array([[-0.5]]), np.array([0.2])), ExpThreshold(0.8)),
                 ControlSpec(TimeDependentDrift(np.linspace(-1, 1, 50)[:, None]), PiecewiseHazard((0.5,), (2.0, 0.5)))):
        _, _, _, log_lr = controlled_paths(ctrl, 100000, 1, unit_grid, 4, 0)
        w = np.exp(log_lr)
        assert abs(w.mean() - 1) < 5 * w.std() / math.sqrt(len(w)) + 1e-3


def test_entropy_formulas():
    assert entropy_exp(1.0) == 0.0
    assert entropy_exp(2.0) == pytest.approx(math.log(2) - 0.5)
    with pytest.raises(DomainError):
        entropy_exp(0.0)
    ph = PiecewiseHazard((0.5, 1.0), (2.0, 2.0, 2.0))
    assert ph.entropy() == pytest.approx(entropy_exp(2.0), abs=1e-12)
    assert PiecewiseHazard((), (1.0,)).entropy() == pytest.approx(0.0, abs=1e-15)


def test_piecewise_entropy_against_quadrature():
    from scipy.integrate import quad
    ph = PiecewiseHazard((0.3, 1.2), (0.5, 3.0, 1.5))
    dens = lambda x: math.exp(float(ph.log_density_ratio(np.array([x]))[0]) - x)
    val = sum(quad(lambda x: dens(x) * float(ph.log_density_ratio(np.array([x]))[0]), a, b)[0]
              for a, b in ((0, 0.3), (0.3, 1.2), (1.2, np.inf)))
    assert ph.entropy() == pytest.approx(val, rel=1e-8)
    u = np.random.default_rng(0).uniform(size=200000)
    s = ph.sample(u)
    assert np.mean(s <= 0.3) == pytest.approx(1 - math.exp(-0.15), abs=0.005)


def test_validation_errors(const_zeta, unit_grid):
    with pytest.raises(ConfigError):
        simulate_uncontrolled(0, 1, unit_grid, const_zeta, 0)
    with pytest.raises(ConfigError):
        simulate_uncontrolled(5, 0, unit_grid, const_zeta, 0)
    with pytest.raises(ConfigError):
        ExpThreshold(-1.0)
    with pytest.raises(ConfigError):
        PiecewiseHazard((0.5,), (1.0,))
    with pytest.raises(ConfigError):
        run_replicas(ReplicaSpec(5, 1, unit_grid, const_zeta, 0), 0)


def test_replicas_worker_invariance(abs_zeta, unit_grid):
    spec = ReplicaSpec(300, 1, unit_grid, abs_zeta, 11, ControlSpec.constant([0.3], 1.2), keep_kill_times=True)
    a = run_replicas(spec, 6, workers=1)
    b = run_replicas(spec, 6, workers=4)
    assert np.array_equal(a.mean_mass, b.mean_mass) and np.array_equal(a.sd_mass, b.sd_mass)
    for ra, rb in zip(a.results, b.results):
        assert ra.replica == rb.replica
        assert np.array_equal(ra.kill_times, rb.kill_times)
    one = run_replicas(spec, 1)
    assert np.all(one.sd_mass == 0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 60), m=st.integers(1, 15), p=st.sampled_from([0.0, 0.5, 1.0, 1.5]),
       seed=st.integers(0, 10**6), d=st.integers(1, 3))
def test_engine_invariants(n, m, p, seed, d):
    g = TimeGrid(1.5, m)
    zeta = KillingFunction.abs_power(p)
    path, ens = simulate_uncontrolled(n, d, g, zeta, seed)
    H = path.hazard.H
    assert H[0] == 0 and np.all(np.diff(H) >= 0)
    assert np.all(np.diff(path.mass) <= 0) and 0 <= path.mass[-1] <= 1
    assert np.array_equal(ens.alive, ens.thresholds[:, None] > H[None, :])
    killed = ens.kill_times <= g.T
    assert np.array_equal(killed, ens.thresholds <= H[-1])
    # a particle dies inside the step where H crosses its threshold
    k = np.searchsorted(g.times, ens.kill_times[killed])
    assert np.all(H[k] >= ens.thresholds[killed] - 1e-12)
    assert np.all(H[k - 1] < ens.thresholds[killed] + 1e-12)
    # mass is a multiple of 1/n
    assert np.allclose(path.mass * n, np.round(path.mass * n))
