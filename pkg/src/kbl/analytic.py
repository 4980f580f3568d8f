"""Deterministic law-of-large-numbers limit.

With ``b(t) = E zeta(W_t)`` for a standard Brownian motion ``W`` started at 0,
the surviving mass ``a`` solves ``a' = -a^2 b``, ``a(0) = 1``; equivalently
``a(t) = 1 / (1 + int_0^t b)`` and ``a(t) = exp(-int_0^t a b)``.  The limit
measure at time ``t`` is ``a(t) N(0, t I_d)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from . import rng
from .core import KillingFunction, TimeGrid, cumulative_trapezoid
from .errors import ConfigError, NumericError
from .quadrature import gauss_hermite

log = logging.getLogger(__name__)

MC_SAMPLES = 10**6
MC_SEED = 0x5EED


@dataclass(frozen=True)
class GaussianEstimate:
    value: float
    stderr: float  # zero for deterministic rules
    method: str


def _abs_moment(p, d):
    # E |Z|^p for Z ~ N(0, I_d)
    return math.exp(0.5 * p * math.log(2.0) + gammaln(0.5 * (d + p)) - gammaln(0.5 * d))


def _mc_normals(d, samples, seed):
    return rng.normals(seed, 0, samples, d, domain=rng.DOMAIN_QUADRATURE)


def gaussian_expectation_estimate(zeta: KillingFunction | Callable, t: float, d: int = 1, *,
                                  method: str = "auto", nodes: int = 64,
                                  mc_samples: int = MC_SAMPLES, seed: int = MC_SEED) -> GaussianEstimate:
    """``E f(Z)`` for ``Z ~ N(0, t I_d)``.

    ``method``: ``"closed_form"`` (constant and ``|x|^p`` killing functions),
    ``"quadrature"`` (tensor Gauss-Hermite), ``"mc"`` (counter-based Monte
    Carlo with standard error) or ``"auto"``: closed form when available,
    otherwise quadrature for ``d <= 2`` and Monte Carlo above.
    """
    if t < 0 or not math.isfinite(t):
        raise ConfigError(f"time must be finite and >= 0, got {t}")
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    f = zeta.evaluate if isinstance(zeta, KillingFunction) else zeta
    if t == 0:
        return GaussianEstimate(float(np.asarray(f(np.zeros((1, d))))[0]), 0.0, "point")
    if method == "auto":
        if isinstance(zeta, KillingFunction) and zeta.kind != "custom":
            method = "closed_form"
        else:
            method = "quadrature" if d <= 2 else "mc"
    if method == "closed_form":
        if not isinstance(zeta, KillingFunction) or zeta.kind == "custom":
            raise ConfigError("closed form needs a constant or abs_power killing function")
        if zeta.kind == "constant":
            val = zeta.param
        else:
            val = t ** (0.5 * zeta.param) * _abs_moment(zeta.param, d)
        est = GaussianEstimate(float(val), 0.0, method)
    elif method == "quadrature":
        pts, wts = gauss_hermite(nodes, d)
        est = GaussianEstimate(float(np.asarray(f(pts * math.sqrt(t))) @ wts), 0.0, method)
    elif method == "mc":
        vals = np.asarray(f(_mc_normals(d, mc_samples, seed) * math.sqrt(t)), dtype=float)
        est = GaussianEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))), method)
    else:
        raise ConfigError(f"unknown method {method!r}")
    if not math.isfinite(est.value):
        raise NumericError(f"non-finite Gaussian expectation at t={t}")
    return est


def gaussian_expectation(zeta, t: float, d: int = 1, **kwargs) -> float:
    return gaussian_expectation_estimate(zeta, t, d, **kwargs).value


def _b_values(zeta, times, d, method, nodes):
    # Shared nodes/samples across times keep b smooth in t for the MC route.
    if isinstance(zeta, KillingFunction) and zeta.kind != "custom" and method in ("auto", "closed_form"):
        return np.array([gaussian_expectation(zeta, t, d, method="closed_form") for t in times])
    if method == "auto":
        method = "quadrature" if d <= 2 else "mc"
    if method == "quadrature":
        pts, wts = gauss_hermite(nodes, d)
    elif method == "mc":
        pts = _mc_normals(d, MC_SAMPLES, MC_SEED)
        wts = np.full(len(pts), 1.0 / len(pts))
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = np.empty(len(times))
    for k, t in enumerate(times):
        out[k] = zeta.evaluate(pts * math.sqrt(t)) @ wts
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite b(t) values")
    return out


@dataclass(frozen=True)
class LimitProfile:
    """The limit on a grid: ``b``, cumulative ``B``, and mass ``a = 1 / (1 + B)``.

    ``a_ode`` is an independent fourth-order integration of ``a' = -a^2 b``
    and ``a_exp = exp(-int a b)`` the exponential form; both are kept for
    consistency checks.
    """

    grid: TimeGrid
    d: int
    b: np.ndarray
    B: np.ndarray
    a: np.ndarray
    a_ode: np.ndarray
    a_exp: np.ndarray
    zeta: KillingFunction
    method: str = "auto"

    @property
    def mass(self) -> np.ndarray:
        return self.a

    @property
    def ode_discrepancy(self) -> float:
        with np.errstate(invalid="ignore", over="ignore"):
            return float(np.max(np.abs(self.a_ode - self.a) / self.a))

    @property
    def dual_formula_gap(self) -> float:
        return float(np.max(np.abs(self.a - self.a_exp)))


def solve_limit(zeta: KillingFunction, grid: TimeGrid, d: int = 1, *, method: str = "auto",
                nodes: int = 64, strict: bool = True) -> LimitProfile:
    """Compute the limit mass path on ``grid``.

    ``B`` is the composite trapezoid integral of ``b``, matching the time
    discretization of the particle engines.  With ``strict`` a
    :class:`NumericError` is raised when the RK4 solution and ``1/(1+B)``
    differ by more than ``10 dt^2`` relative.
    """
    t = grid.times
    dt = grid.dt
    b = _b_values(zeta, t, d, method, nodes)
    b_mid = _b_values(zeta, t[:-1] + 0.5 * dt, d, method, nodes)
    B = cumulative_trapezoid(b, dt)
    a = 1.0 / (1.0 + B)

    a_ode = np.empty_like(a)
    a_ode[0] = 1.0
    # a blown-up RK4 on a coarse grid is reported by the check below, not by numpy
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.m):
            y = a_ode[k]
            k1 = -y * y * b[k]
            y2 = y + 0.5 * dt * k1
            k2 = -y2 * y2 * b_mid[k]
            y3 = y + 0.5 * dt * k2
            k3 = -y3 * y3 * b_mid[k]
            y4 = y + dt * k3
            k4 = -y4 * y4 * b[k + 1]
            a_ode[k + 1] = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    a_exp = np.exp(-cumulative_trapezoid(a * b, dt))
    profile = LimitProfile(grid, d, b, B, a, a_ode, a_exp, zeta, method)
    tol = 10.0 * dt**2
    if not profile.ode_discrepancy <= tol:  # NaN counts as a failure
        msg = (f"limit ODE and closed form disagree by {profile.ode_discrepancy:.3g} "
               f"(tolerance {tol:.3g}) for {zeta.describe()}")
        if strict:
            raise NumericError(msg)
        log.warning(msg)
    return profile


def limit_observable(profile: LimitProfile, f: Callable[[np.ndarray], np.ndarray], t: float, *,
                     nodes: int = 64) -> float:
    """``<f, mu(t)> = a(t) E f(Z_t)`` with ``Z_t ~ N(0, t I_d)``; ``t`` must be a grid time."""
    k = profile.grid.index(t)
    tk = profile.grid.times[k]
    if tk == 0:
        return float(profile.a[0] * np.asarray(f(np.zeros((1, profile.d))))[0])
    pts, wts = gauss_hermite(nodes, profile.d)
    val = float(np.asarray(f(pts * math.sqrt(tk)), dtype=float) @ wts)
    if not math.isfinite(val):
        raise NumericError("non-finite observable")
    return float(profile.a[k] * val)
