"""Particle engines for Brownian particles with mean-field killing.

A particle dies the first time the cumulative hazard
``H(t) = int_0^t <zeta, mu^n(s)> ds`` reaches its threshold.  Positions are
frozen at the left end of each step when computing the hazard slope, but
kill events are resolved exactly against the resulting piecewise-linear
``H``: since every particle sees the same ``H``, deaths occur in increasing
threshold order, and after each death the slope drops by that particle's
``zeta / n``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba as nb
import numpy as np

from . import rng
from .core import (EmpiricalMeasurePath, HazardPath, KillingFunction, ParticleEnsemble,
                   TimeGrid)
from .errors import ConfigError, DomainError


# ---------------------------------------------------------------- threshold laws

@dataclass(frozen=True)
class ExpThreshold:
    """Exponential threshold law with rate ``rate`` (rate 1 is the reference law)."""

    rate: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConfigError(f"threshold rate must be > 0, got {self.rate}")

    def sample(self, u: np.ndarray) -> np.ndarray:
        return -np.log(u) / self.rate

    def entropy(self) -> float:
        return entropy_exp(self.rate)

    def log_density_ratio(self, x: np.ndarray) -> np.ndarray:
        """``log (d nu / d theta)(x)`` against the rate-one exponential."""
        return math.log(self.rate) + (1.0 - self.rate) * x

    @property
    def is_reference(self) -> bool:
        return self.rate == 1.0

    def describe(self) -> str:
        return f"exp({self.rate:g})"


@dataclass(frozen=True)
class PiecewiseHazard:
    """Threshold law with hazard rate ``rates[j]`` on ``[breaks[j-1], breaks[j])``.

    ``breaks`` are the interior cut points (``0 < b_1 < ... < b_J``) and
    ``rates`` has ``J + 1`` entries, the last one being the tail rate.
    """

    breaks: tuple
    rates: tuple

    def __post_init__(self):
        br = np.asarray(self.breaks, dtype=float)
        rt = np.asarray(self.rates, dtype=float)
        if len(rt) != len(br) + 1:
            raise ConfigError("piecewise hazard needs len(rates) == len(breaks) + 1")
        if np.any(~np.isfinite(rt)) or np.any(rt <= 0):
            raise ConfigError("piecewise hazard rates must be finite and > 0")
        if len(br) and (br[0] <= 0 or np.any(np.diff(br) <= 0) or not np.all(np.isfinite(br))):
            raise ConfigError("piecewise hazard breaks must be positive and increasing")

    def _edges(self):
        edges = np.concatenate([[0.0], np.asarray(self.breaks, dtype=float)])
        rates = np.asarray(self.rates, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(rates[:-1] * np.diff(edges))])
        return edges, rates, cum

    def cumulative_hazard(self, x):
        edges, rates, cum = self._edges()
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(edges, x, side="right") - 1
        return cum[j] + rates[j] * (x - edges[j])

    def sample(self, u: np.ndarray) -> np.ndarray:
        edges, rates, cum = self._edges()
        e = -np.log(u)
        j = np.searchsorted(cum, e, side="right") - 1
        return edges[j] + (e - cum[j]) / rates[j]

    def log_density_ratio(self, x: np.ndarray) -> np.ndarray:
        edges, rates, _ = self._edges()
        j = np.searchsorted(edges, x, side="right") - 1
        return np.log(rates[j]) - self.cumulative_hazard(x) + x

    def entropy(self) -> float:
        # R = sum_j P(piece j) log rate_j - E Lambda(S) + E S, with E Lambda(S) = 1
        edges, rates, cum = self._edges()
        surv = np.exp(-cum)
        p = surv - np.append(surv[1:], 0.0)
        mean = float(np.sum(surv[:-1] * (1 - np.exp(-rates[:-1] * np.diff(edges))) / rates[:-1])
                     + surv[-1] / rates[-1])
        return max(float(p @ np.log(rates)) - 1.0 + mean, 0.0)

    @property
    def is_reference(self) -> bool:
        return all(r == 1.0 for r in self.rates)

    def describe(self) -> str:
        return f"piecewise(breaks={list(self.breaks)},rates={list(self.rates)})"


def entropy_exp(rate: float) -> float:
    """Relative entropy of Exp(rate) with respect to Exp(1): ``log rate + 1/rate - 1``."""
    if not (math.isfinite(rate) and rate > 0):
        raise DomainError(f"rate must be > 0, got {rate}")
    if rate == 1.0:
        return 0.0
    return max(math.log(rate) + 1.0 / rate - 1.0, 0.0)


# ---------------------------------------------------------------- drift policies

@dataclass(frozen=True)
class ZeroDrift:
    def describe(self) -> str:
        return "zero"


@dataclass(frozen=True)
class TimeDependentDrift:
    """Deterministic drift, constant on each grid step.

    ``values`` is a ``d``-vector (same drift on every step) or an ``(m, d)`` array.
    """

    values: np.ndarray = field(compare=False)

    def per_step(self, m: int, d: int) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        if v.ndim <= 1:
            v = np.broadcast_to(np.atleast_1d(v), (m, d))
        if v.shape != (m, d):
            raise ConfigError(f"drift values have shape {v.shape}, expected ({m}, {d})")
        return np.ascontiguousarray(v)

    def describe(self) -> str:
        v = np.asarray(self.values, dtype=float)
        if v.ndim <= 1:
            return "const(" + ",".join(f"{x:g}" for x in np.atleast_1d(v)) + ")"
        return f"time_dependent(shape={v.shape})"


@dataclass(frozen=True)
class AffineFeedback:
    """Drift ``u(t_k, x) = A_k x + c_k``; ``A`` is ``(d, d)`` or ``(m, d, d)``, ``c`` is ``(d,)`` or ``(m, d)``."""

    A: np.ndarray = field(compare=False)
    c: np.ndarray = field(compare=False)

    def per_step(self, m: int, d: int):
        A = np.asarray(self.A, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if A.ndim == 2:
            A = np.broadcast_to(A, (m, d, d))
        if c.ndim <= 1:
            c = np.broadcast_to(np.atleast_1d(c), (m, d))
        if A.shape != (m, d, d) or c.shape != (m, d):
            raise ConfigError("affine feedback arrays do not match grid and dimension")
        return A, c

    def describe(self) -> str:
        return "affine_feedback"


@dataclass(frozen=True)
class ControlSpec:
    """Exchangeable control: one drift policy and one threshold law for every particle."""

    drift: object = field(default_factory=ZeroDrift)
    threshold: object = field(default_factory=ExpThreshold)

    @classmethod
    def zero(cls) -> "ControlSpec":
        return cls(ZeroDrift(), ExpThreshold(1.0))

    @classmethod
    def constant(cls, u, rate: float = 1.0) -> "ControlSpec":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        drift = ZeroDrift() if np.all(u == 0) else TimeDependentDrift(u)
        return cls(drift, ExpThreshold(rate))

    @property
    def is_zero(self) -> bool:
        return isinstance(self.drift, ZeroDrift) and self.threshold.is_reference

    def describe(self) -> str:
        return f"drift={self.drift.describe()};threshold={self.threshold.describe()}"


@dataclass(frozen=True)
class CostLedger:
    """Per-particle average control cost of one controlled run.

    ``log_likelihood_ratio`` is ``log dP/dQ`` of the realized sample (reference
    law over controlled law), used for importance sampling.
    """

    drift_cost: float
    entropy_cost: float
    log_likelihood_ratio: float = 0.0

    @property
    def total(self) -> float:
        return self.drift_cost + self.entropy_cost


# ---------------------------------------------------------------- kill kernel

@nb.njit(cache=True, nogil=True)
def _kill_kernel(zvals, thresholds, order, dt, m, zeta_const, use_const):
    n = thresholds.shape[0]
    inv_n = 1.0 / n
    H = np.zeros(m + 1)
    zmean = np.zeros(m + 1)
    count = np.zeros(m + 1, dtype=np.int64)
    death = np.full(n, m + 1, dtype=np.int64)
    ktime = np.full(n, np.inf)
    alive = np.ones(n, dtype=np.bool_)
    n_alive = n
    ptr = 0
    h = 0.0
    for k in range(m + 1):
        # slope at t_k: fixed-order sum over currently alive particles
        if use_const:
            s = zeta_const * n_alive * inv_n
        else:
            s = 0.0
            for i in range(n):
                if alive[i]:
                    s += zvals[i, k]
            s *= inv_n
        H[k] = h
        zmean[k] = s
        count[k] = n_alive
        if k == m:
            break
        t0 = k * dt
        elapsed = 0.0
        while ptr < n and s > 0.0:
            i = order[ptr]
            need = (thresholds[i] - h) / s
            if need < 0.0:
                need = 0.0
            if elapsed + need <= dt:
                elapsed += need
                h = thresholds[i]
                alive[i] = False
                n_alive -= 1
                death[i] = k + 1
                ktime[i] = t0 + elapsed
                ptr += 1
                if n_alive == 0:
                    s = 0.0
                elif use_const:
                    s = zeta_const * n_alive * inv_n
                else:
                    s -= zvals[i, k] * inv_n
                    if s < 0.0:
                        s = 0.0
            else:
                break
        if s > 0.0:
            h += s * (dt - elapsed)
    return H, zmean, count, death, ktime


def resolve_kills(zvals: Optional[np.ndarray], thresholds: np.ndarray, grid: TimeGrid,
                  zeta: KillingFunction):
    """Run the exact kill processing.

    ``zvals`` holds ``zeta`` at every particle and grid time, shape
    ``(n, m+1)``; it is ignored (may be ``None``) for constant ``zeta``.
    Ties between thresholds are broken by particle index.
    Returns ``(H, zeta_mean, alive_count, death_index, kill_times)``; particle
    ``i`` is alive at grid index ``k`` iff ``k < death_index[i]``.
    """
    order = np.argsort(thresholds, kind="stable")
    if zeta.is_constant:
        return _kill_kernel(np.zeros((1, 1)), thresholds, order, grid.dt, grid.m,
                            float(zeta.param), True)
    return _kill_kernel(np.ascontiguousarray(zvals), thresholds, order, grid.dt, grid.m, 0.0, False)


# ---------------------------------------------------------------- engines

def _check_sizes(n, d):
    if int(n) != n or n < 1:
        raise ConfigError(f"particle count must be a positive integer, got {n}")
    if int(d) != d or d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d}")


def controlled_paths(control: ControlSpec, n: int, d: int, grid: TimeGrid, seed: int, replica: int,
                     *, domain: int = rng.DOMAIN_PARTICLES):
    """Sample ``n`` independent controlled (path, threshold) pairs.

    Returns ``positions (n, m+1, d)``, ``thresholds (n,)``, per-particle drift
    cost ``0.5 sum |u_k|^2 dt`` and per-particle ``log dP/dQ`` (Girsanov term
    of the discretized dynamics plus threshold density ratio).
    """
    m, dt = grid.m, grid.dt
    sq = math.sqrt(dt)
    noise = rng.normals(seed, replica, n, m * d, domain=domain).reshape(n, m, d)
    noise *= sq
    thresholds = control.threshold.sample(rng.uniforms(seed, replica, n, 1, domain=domain)[:, 0])
    positions = np.zeros((n, m + 1, d))
    drift_cost = np.zeros(n)
    log_lr = np.zeros(n)
    drift = control.drift
    if isinstance(drift, ZeroDrift):
        np.cumsum(noise, axis=1, out=positions[:, 1:, :])
    elif isinstance(drift, TimeDependentDrift):
        u = drift.per_step(m, d)
        np.cumsum(noise + u[None, :, :] * dt, axis=1, out=positions[:, 1:, :])
        drift_cost[:] = 0.5 * dt * float(np.sum(u * u))
        log_lr[:] = -np.einsum("kd,nkd->n", u, noise) - drift_cost
    elif isinstance(drift, AffineFeedback):
        A, c = drift.per_step(m, d)
        x = np.zeros((n, d))
        for k in range(m):
            uk = x @ A[k].T + c[k]
            usq = np.sum(uk * uk, axis=1)
            drift_cost += 0.5 * dt * usq
            log_lr -= np.sum(uk * noise[:, k, :], axis=1) + 0.5 * dt * usq
            x = x + noise[:, k, :] + uk * dt
            positions[:, k + 1, :] = x
    else:
        raise ConfigError(f"unknown drift policy {type(drift).__name__}")
    if not control.threshold.is_reference:
        log_lr -= control.threshold.log_density_ratio(thresholds)
    return positions, thresholds, drift_cost, log_lr


def _assemble(positions, thresholds, grid, zeta, n):
    zvals = None if zeta.is_constant else zeta.evaluate(positions)
    H, zmean, count, death, ktime = resolve_kills(zvals, thresholds, grid, zeta)
    hazard = HazardPath(grid, H)
    alive = np.arange(grid.m + 1)[None, :] < death[:, None]
    ens = ParticleEnsemble(positions, thresholds, alive, ktime, hazard)
    path = EmpiricalMeasurePath(grid, count / n, zmean, hazard, n, ens)
    return path, ens


def simulate_uncontrolled(n: int, d: int, grid: TimeGrid, zeta: KillingFunction, seed: int,
                          replica: int = 0):
    """Simulate the n-particle system with Exp(1) thresholds and no drift.

    Deterministic in ``(seed, replica, n, grid)``.  Returns ``(path, ensemble)``.
    """
    _check_sizes(n, d)
    positions, thresholds, _, _ = controlled_paths(ControlSpec.zero(), n, d, grid, seed, replica)
    return _assemble(positions, thresholds, grid, zeta, n)


def simulate_controlled(n: int, d: int, grid: TimeGrid, zeta: KillingFunction, control: ControlSpec,
                        seed: int, replica: int = 0):
    """Simulate the controlled system; returns ``(path, ensemble, cost_ledger)``.

    Uses the same random streams as :func:`simulate_uncontrolled`, so the
    zero control reproduces it exactly.
    """
    _check_sizes(n, d)
    positions, thresholds, drift_cost, log_lr = controlled_paths(control, n, d, grid, seed, replica)
    path, ens = _assemble(positions, thresholds, grid, zeta, n)
    if control.is_zero:
        ledger = CostLedger(0.0, 0.0, 0.0)
    else:
        ledger = CostLedger(float(np.mean(drift_cost)), control.threshold.entropy(), float(np.sum(log_lr)))
    return path, ens, ledger


# ---------------------------------------------------------------- replicas

@dataclass(frozen=True)
class ReplicaSpec:
    """Everything needed to run one replica; ``control=None`` means uncontrolled."""

    n: int
    d: int
    grid: TimeGrid
    zeta: KillingFunction
    seed: int
    control: Optional[ControlSpec] = None
    keep_kill_times: bool = False
    keep_terminal: bool = False


@dataclass(frozen=True)
class ReplicaResult:
    replica: int
    path: EmpiricalMeasurePath  # without ensemble
    cost: CostLedger
    kill_times: Optional[np.ndarray] = None
    thresholds: Optional[np.ndarray] = None
    terminal_positions: Optional[np.ndarray] = None
    terminal_alive: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ReplicaBatch:
    results: list
    mean_mass: np.ndarray
    sd_mass: np.ndarray
    se_mass: np.ndarray
    mean_zeta: np.ndarray

    @property
    def paths(self):
        return [r.path for r in self.results]


def run_one(spec: ReplicaSpec, replica: int) -> ReplicaResult:
    if spec.control is None:
        path, ens = simulate_uncontrolled(spec.n, spec.d, spec.grid, spec.zeta, spec.seed, replica)
        cost = CostLedger(0.0, 0.0, 0.0)
    else:
        path, ens, cost = simulate_controlled(spec.n, spec.d, spec.grid, spec.zeta, spec.control,
                                              spec.seed, replica)
    light = EmpiricalMeasurePath(path.grid, path.mass, path.zeta_mean, path.hazard, path.n, None)
    return ReplicaResult(
        replica, light, cost,
        kill_times=ens.kill_times if spec.keep_kill_times else None,
        thresholds=ens.thresholds if spec.keep_kill_times else None,
        terminal_positions=ens.positions[:, -1, :].copy() if spec.keep_terminal else None,
        terminal_alive=ens.alive[:, -1].copy() if spec.keep_terminal else None,
    )


def run_replicas(spec: ReplicaSpec, R: int, workers: int = 1, *,
                 replica_ids: Optional[Sequence[int]] = None) -> ReplicaBatch:
    """Run ``R`` replicas (ids ``0..R-1`` unless given) on a thread pool.

    Output is identical for every worker count: each replica's randomness is
    addressed by its id, and results are collected in id order.
    """
    if R < 1:
        raise ConfigError("replica count must be >= 1")
    ids = list(range(R)) if replica_ids is None else [int(r) for r in replica_ids]
    if len(ids) != R:
        raise ConfigError("replica_ids must have length R")
    workers = max(1, int(workers))
    if workers == 1 or R == 1:
        results = [run_one(spec, r) for r in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: run_one(spec, r), ids))
    masses = np.stack([r.path.mass for r in results])
    zetas = np.stack([r.path.zeta_mean for r in results])
    mean = masses.mean(axis=0)
    sd = masses.std(axis=0, ddof=1) if R > 1 else np.zeros_like(mean)
    return ReplicaBatch(results, mean, sd, sd / math.sqrt(R), zetas.mean(axis=0))
