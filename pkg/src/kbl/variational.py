"""Variational quantities: rate-function certificates, Laplace functionals, desk-scale representation checks.

All bounds here are *upper* bounds obtained by restricting the controls to
exchangeable parametric families (constant or affine drifts, exponential or
piecewise-hazard threshold laws).  They are reported as such and never as the
rate function itself.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import KillingFunction, TimeGrid
from .errors import ConfigError, NonConvergenceError, NumericError
from .fixedpoint import FixedPointResult, j_cost, sample_theta, solve_fixed_point
from .quadrature import gauss_hermite, gauss_laguerre
from .sim import ControlSpec, ReplicaSpec, entropy_exp, run_replicas

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- rate frontier

@dataclass(frozen=True)
class RateCertificate:
    """``I(limit path) <= J``: the control reaches ``limit`` at cost ``J``."""

    control: ControlSpec
    J: float
    limit: FixedPointResult
    observable: float


def rate_frontier(family: Sequence[ControlSpec], zeta: KillingFunction, grid: TimeGrid, M: int, *,
                  seed: int = 0, d: int = 1, tol: float = 1e-6, max_iter: int = 200,
                  observable: Optional[Callable[[FixedPointResult], float]] = None) -> list:
    """One certificate per control, sorted by observable (default: terminal mass).

    All controls share the same random streams (common random numbers).
    Controls whose fixed point fails to converge are skipped with a warning.
    """
    family = list(family)
    if not family:
        raise ConfigError("control family is empty")
    observable = observable or (lambda fp: float(fp.mass[-1]))
    certs = []
    for control in family:
        theta = sample_theta(control, M, d, grid, seed)
        try:
            fp = solve_fixed_point(theta, zeta, grid, tol=tol, max_iter=max_iter)
        except NonConvergenceError as exc:
            warnings.warn(f"skipping {control.describe()}: {exc}")
            continue
        certs.append(RateCertificate(control, j_cost(theta), fp, observable(fp)))
    certs.sort(key=lambda c: (c.observable, c.J))
    return certs


def frontier_envelope(certs: Sequence[RateCertificate], bin_width: float = 0.02):
    """Lower envelope of ``J`` over observable bins: list of ``(bin_center, J_min, certificate)``."""
    best = {}
    for c in certs:
        b = int(math.floor(c.observable / bin_width + 0.5))
        if b not in best or c.J < best[b].J:
            best[b] = c
    return [(b * bin_width, best[b].J, best[b]) for b in sorted(best)]


# ---------------------------------------------------------------- Laplace functionals

@dataclass(frozen=True)
class TerminalMassFunctional:
    """``F(mu) = clip(slope * mass(T) + offset, lower, upper)``: bounded and continuous."""

    slope: float = 1.0
    offset: float = 0.0
    lower: float = -math.inf
    upper: float = math.inf

    @classmethod
    def constant(cls, c: float) -> "TerminalMassFunctional":
        return cls(0.0, float(c))

    def __call__(self, terminal_mass):
        return np.clip(self.slope * np.asarray(terminal_mass, dtype=float) + self.offset,
                       self.lower, self.upper)

    def range(self):
        v = self(np.array([0.0, 1.0]))
        return float(v.min()), float(v.max())

    def describe(self) -> str:
        return f"clip({self.slope:g}*mass(T)+{self.offset:g},{self.lower:g},{self.upper:g})"


@dataclass(frozen=True)
class LaplaceEstimate:
    estimate: float
    se: float
    n: int
    replicas: int
    proposal: Optional[ControlSpec] = None


def log_mean_exp_estimate(log_w: np.ndarray, n: int):
    """``-(1/n) log mean exp(log_w)`` and its delta-method standard error."""
    log_w = np.asarray(log_w, dtype=float)
    R = len(log_w)
    top = float(np.max(log_w))
    w = np.exp(log_w - top)
    wbar = float(w.mean())
    est = -(top + math.log(wbar)) / n
    se = float(w.std(ddof=1) / (math.sqrt(R) * wbar)) / n if R > 1 else math.inf
    return est, se


def laplace_mc(F: TerminalMassFunctional, n: int, R: int, seed: int, *, zeta: KillingFunction,
               grid: TimeGrid, d: int = 1, workers: int = 1, proposal: Optional[ControlSpec] = None,
               replica_offset: int = 0) -> LaplaceEstimate:
    """Estimate ``-(1/n) log E exp(-n F(mu^n))`` from ``R`` replicas.

    With ``proposal=None`` the replicas are uncontrolled.  Otherwise they are
    drawn under the proposal control and reweighted by the exact likelihood
    ratio of the discretized dynamics, which keeps the estimator of
    ``E exp(-n F)`` unbiased while sampling the tilted region directly.
    """
    if R < 2:
        raise ConfigError("laplace_mc needs R >= 2")
    lo, hi = F.range()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("F must be bounded")
    if F.slope == 0.0 or lo == hi:
        return LaplaceEstimate(float(F(0.0)), 0.0, n, R, proposal)
    control = None if proposal is None or proposal.is_zero else proposal
    spec = ReplicaSpec(n, d, grid, zeta, seed, control)
    batch = run_replicas(spec, R, workers, replica_ids=range(replica_offset, replica_offset + R))
    log_w = np.array([-n * float(F(r.path.mass[-1])) + r.cost.log_likelihood_ratio for r in batch.results])
    est, se = log_mean_exp_estimate(log_w, n)
    return LaplaceEstimate(est, se, n, R, proposal)


@dataclass(frozen=True)
class ControlValue:
    control: ControlSpec
    mean: float
    se: float
    cost: float


@dataclass(frozen=True)
class LaplaceReport:
    F: TerminalMassFunctional
    n: int
    mc: float
    mc_se: float
    upper: float
    upper_se: float
    best_control: ControlSpec
    scanned: tuple = field(default_factory=tuple)
    zero_control_upper: Optional[float] = None

    @property
    def gap(self) -> float:
        return self.upper - self.mc

    @property
    def combined_se(self) -> float:
        return math.sqrt(self.mc_se**2 + self.upper_se**2)

    @property
    def zero_control_gap(self) -> Optional[float]:
        return None if self.zero_control_upper is None else self.zero_control_upper - self.mc

    @property
    def violated(self) -> bool:
        """True when the upper bound falls below the estimate by more than 3 standard errors.

        A floating-point floor of ``1e-12 * (1 + |mc|)`` absorbs rounding when both sides are exact.
        """
        slack = 3.0 * self.combined_se + 1e-12 * (1.0 + abs(self.mc))
        return self.upper < self.mc - slack


def control_value(F: TerminalMassFunctional, control: ControlSpec, n: int, R: int, seed: int, *,
                  zeta: KillingFunction, grid: TimeGrid, d: int = 1, workers: int = 1) -> ControlValue:
    """Monte Carlo estimate of ``E[cost + F(controlled mu^n)]`` for one control."""
    spec = ReplicaSpec(n, d, grid, zeta, seed, None if control.is_zero else control)
    batch = run_replicas(spec, R, workers)
    vals = np.array([r.cost.total + float(F(r.path.mass[-1])) for r in batch.results])
    se = float(vals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    cost = float(np.mean([r.cost.total for r in batch.results]))
    return ControlValue(control, float(vals.mean()), se, cost)


def laplace_variational_upper(F: TerminalMassFunctional, family: Sequence[ControlSpec], n: int,
                              R: int, seed: int, *, zeta: KillingFunction, grid: TimeGrid, d: int = 1,
                              workers: int = 1, importance: bool = True) -> LaplaceReport:
    """Scan the family for the smallest ``E[cost + F]`` and compare with the Laplace estimate.

    Every control uses the same replica streams.  With ``importance`` the
    Laplace estimate uses the best scanned control as proposal, on replica ids
    disjoint from the scan.
    """
    family = list(family)
    if not family:
        raise ConfigError("control family is empty")
    values = [control_value(F, c, n, R, seed, zeta=zeta, grid=grid, d=d, workers=workers) for c in family]
    best = min(values, key=lambda v: v.mean)
    zero = next((v.mean for v in values if v.control.is_zero), None)
    proposal = best.control if importance else None
    mc = laplace_mc(F, n, R, seed, zeta=zeta, grid=grid, d=d, workers=workers, proposal=proposal,
                    replica_offset=R)
    report = LaplaceReport(F, n, mc.estimate, mc.se, best.mean, best.se, best.control, tuple(values), zero)
    if report.violated:
        log.error("variational upper bound %.6g below Laplace estimate %.6g beyond 3 SE",
                  report.upper, report.mc)
    return report


# ---------------------------------------------------------------- representation check

@dataclass(frozen=True)
class LinearThresholdG:
    """``g(w, x) = alpha * x``."""

    alpha: float

    def __call__(self, w, x):
        return self.alpha * np.asarray(x) + 0.0 * np.asarray(w)

    def describe(self):
        return f"linear_x(alpha={self.alpha:g})"


@dataclass(frozen=True)
class ConstantG:
    c: float

    def __call__(self, w, x):
        return np.full(np.broadcast(np.asarray(w), np.asarray(x)).shape, self.c)

    def describe(self):
        return f"constant({self.c:g})"


@dataclass(frozen=True)
class SmoothBoundedG:
    """``a tanh(b w + c) + e sin(f x + h) + k exp(-l x)``, bounded on ``R x R_+``."""

    a: float
    b: float
    c: float
    e: float
    f: float
    h: float
    k: float
    l: float

    @classmethod
    def random(cls, rng: np.random.Generator) -> "SmoothBoundedG":
        return cls(a=rng.uniform(-1, 1), b=rng.uniform(-2, 2), c=rng.uniform(-1, 1),
                   e=rng.uniform(-1, 1), f=rng.uniform(0, 2), h=rng.uniform(0, 2 * math.pi),
                   k=rng.uniform(-1, 1), l=rng.uniform(0.2, 2))

    def __call__(self, w, x):
        w = np.asarray(w, dtype=float)
        x = np.asarray(x, dtype=float)
        return (self.a * np.tanh(self.b * w + self.c) + self.e * np.sin(self.f * x + self.h)
                + self.k * np.exp(-self.l * x))

    def describe(self):
        return "smooth(" + ",".join(f"{v:.4g}" for v in (self.a, self.b, self.c, self.e,
                                                            self.f, self.h, self.k, self.l)) + ")"


def random_g_family(count: int, seed: int = 0) -> list:
    gen = np.random.default_rng(seed)
    return [SmoothBoundedG.random(gen) for _ in range(count)]


@dataclass(frozen=True)
class VarRepResult:
    name: str
    lhs: float
    rhs: float
    u_star: float
    rate_star: float
    quadrature_error: float

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs


def _lhs(g, T, nodes):
    wx, ww = gauss_hermite(nodes)
    xx, xw = gauss_laguerre(nodes)
    vals = g(math.sqrt(T) * wx[:, 0][:, None], xx[None, :])
    vmin = float(vals.min())
    e = ww @ np.exp(-(vals - vmin)) @ xw
    return vmin - math.log(e)


def _rhs_value(g, T, u, rate, nodes):
    wx, ww = gauss_hermite(nodes)
    xx, xw = gauss_laguerre(nodes)
    vals = g(math.sqrt(T) * wx[:, 0][:, None] + u * T, xx[None, :] / rate)
    return entropy_exp(rate) + 0.5 * u * u * T + float(ww @ vals @ xw)


def golden_section(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def varrep_check(g, *, T: float = 1.0, nodes: int = 64,
                 drifts: Sequence[float] = tuple(np.linspace(-2.0, 2.0, 41)),
                 rates: Sequence[float] = tuple(np.geomspace(0.2, 5.0, 41)),
                 refine: bool = True, name: Optional[str] = None) -> VarRepResult:
    """Compare ``-log E exp(-g(W_T, X))`` with its restricted variational upper bound.

    ``X ~ Exp(1)`` and ``W_T ~ N(0, T)``.  The right side minimizes
    ``R(Exp(rate) || Exp(1)) + u^2 T / 2 + E g(W_T + u T, X_rate)`` over
    constant drifts ``u`` and exponential threshold laws: grid scan, then
    golden-section refinement on each axis in turn.  The quadrature error
    estimate is the change of both sides when the node count doubles.
    """
    if T <= 0:
        raise ConfigError("T must be positive")
    drifts = np.asarray(drifts, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if len(drifts) == 0 or len(rates) == 0 or np.any(rates <= 0):
        raise ConfigError("need non-empty drift grid and positive rates")
    lhs = _lhs(g, T, nodes)
    table = np.array([[_rhs_value(g, T, u, r, nodes) for r in rates] for u in drifts])
    iu, ir = np.unravel_index(np.argmin(table), table.shape)
    u_star, r_star, best = float(drifts[iu]), float(rates[ir]), float(table[iu, ir])

    if refine:
        for _ in range(2):
            lo_r = rates[max(ir - 1, 0)]
            hi_r = rates[min(ir + 1, len(rates) - 1)]
            if hi_r > lo_r:
                x, fx = golden_section(lambda lr: _rhs_value(g, T, u_star, math.exp(lr), nodes),
                                       math.log(lo_r), math.log(hi_r))
                if fx < best:
                    best, r_star = float(fx), math.exp(x)
            lo_u = drifts[max(iu - 1, 0)]
            hi_u = drifts[min(iu + 1, len(drifts) - 1)]
            if hi_u > lo_u:
                x, fx = golden_section(lambda u: _rhs_value(g, T, u, r_star, nodes), lo_u, hi_u)
                if fx < best:
                    best, u_star = float(fx), float(x)

    err = max(abs(_lhs(g, T, 2 * nodes) - lhs),
              abs(_rhs_value(g, T, u_star, r_star, 2 * nodes) - best))
    if not (math.isfinite(lhs) and math.isfinite(best)):
        raise NumericError("non-finite quadrature value in representation check")
    label = name or (g.describe() if hasattr(g, "describe") else "g")
    return VarRepResult(label, lhs, best, u_star, r_star, err)


def default_varrep_suite(random_cases: int = 0, seed: int = 0) -> list:
    """The linear cases ``alpha = 0.5, 1``, a constant case, plus ``random_cases`` smooth bounded cases."""
    cases = [LinearThresholdG(0.5), LinearThresholdG(1.0), ConstantG(0.3)]
    return cases + random_g_family(random_cases, seed)
