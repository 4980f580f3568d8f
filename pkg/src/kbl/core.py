"""Domain types: killing functions, time grids, particle ensembles and measure paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class KillingFunction:
    """Nonnegative killing rate ``zeta(x)`` with growth certificate ``zeta(x) <= C (1 + |x|^p)``.

    Build instances with :meth:`constant`, :meth:`abs_power` or :meth:`custom`.
    ``evaluate`` accepts arrays whose last axis is the spatial dimension and
    returns one value per point.
    """

    kind: str
    param: float = 0.0
    growth_constant: float = 1.0
    growth_power: float = 0.0
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "abs_power", "custom"):
            raise ConfigError(f"unknown killing function kind {self.kind!r}")
        if not self.growth_constant > 0:
            raise ConfigError("growth constant C_zeta must be positive")
        if not 0 <= self.growth_power < 2:
            raise ConfigError("growth power p must lie in [0, 2)")
        if self.kind == "custom" and self.fn is None:
            raise ConfigError("custom killing function needs a callable")

    @classmethod
    def constant(cls, c: float) -> "KillingFunction":
        if not (math.isfinite(c) and c >= 0):
            raise ConfigError(f"constant killing rate must be finite and >= 0, got {c}")
        return cls("constant", float(c), growth_constant=max(float(c), 1.0), growth_power=0.0)

    @classmethod
    def abs_power(cls, p: float) -> "KillingFunction":
        if not 0 <= p < 2:
            raise ConfigError(f"abs_power exponent must lie in [0, 2), got {p}")
        return cls("abs_power", float(p), growth_constant=1.0, growth_power=float(p))

    @classmethod
    def custom(cls, fn, growth_constant: float, growth_power: float, name: str = "custom") -> "KillingFunction":
        """Wrap a vectorized callable ``fn(x) -> values`` (``x`` of shape ``(..., d)``).

        The growth certificate is taken on trust; :meth:`spot_check` tests it on samples.
        """
        return cls("custom", 0.0, float(growth_constant), float(growth_power), fn=fn, name=name)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.param)
        if self.kind == "abs_power":
            r = np.sqrt(np.einsum("...i,...i->...", x, x)) if x.shape[-1] > 1 else np.abs(x[..., 0])
            if self.param == 0.0:
                return np.ones_like(r)
            return r ** self.param
        return np.asarray(self.fn(x), dtype=float)

    def bound(self, x) -> np.ndarray:
        """The growth envelope ``C (1 + |x|^p)`` at each point."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.einsum("...i,...i->...", x, x))
        return self.growth_constant * (1.0 + r ** self.growth_power)

    def spot_check(self, x) -> bool:
        """True iff ``0 <= zeta <= C (1 + |x|^p)`` on every sampled point."""
        v = self.evaluate(x)
        return bool(np.all(v >= 0) and np.all(v <= self.bound(x) * (1 + 1e-12)))

    def describe(self) -> str:
        if self.kind == "custom":
            return self.name
        return f"{self.kind}({self.param:g})"


def eval_zeta(zeta: KillingFunction, x) -> float:
    """Evaluate ``zeta`` at a single point ``x`` (scalar or d-vector)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DomainError("eval_zeta expects a single point")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite point {x}")
    return float(zeta.evaluate(x))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k T / m`` on ``[0, T]``."""

    T: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"horizon T must be positive and finite, got {self.T}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"step count m must be a positive integer, got {self.m}")

    @property
    def dt(self) -> float:
        return self.T / self.m

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.m + 1) * (self.T / self.m)
        t[-1] = self.T
        return t

    def index(self, t: float, atol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        k = int(round(t / self.dt))
        if not 0 <= k <= self.m or abs(k * self.dt - t) > atol * max(1.0, self.T):
            raise ConfigError(f"time {t} is not on the grid (T={self.T}, m={self.m})")
        return k


def cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """Running trapezoid integral, starting at 0, of grid values with spacing ``dt``."""
    out = np.zeros(len(values))
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


@dataclass(frozen=True)
class HazardPath:
    """Cumulative killing integral ``H(t_k)`` on a grid."""

    grid: TimeGrid
    H: np.ndarray

    def __post_init__(self):
        if self.H.shape != (self.grid.m + 1,):
            raise ConfigError("hazard path length must be m + 1")

    def is_valid(self, atol: float = 0.0) -> bool:
        return bool(self.H[0] == 0.0 and np.all(np.diff(self.H) >= -atol))


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle paths, thresholds and survival status on a grid.

    ``alive[i, k]`` holds iff ``thresholds[i] > hazard.H[k]``; ``kill_times`` is
    ``inf`` for particles surviving to ``T``.
    """

    positions: np.ndarray  # (n, m+1, d)
    thresholds: np.ndarray  # (n,)
    alive: np.ndarray  # (n, m+1) bool
    kill_times: np.ndarray  # (n,)
    hazard: HazardPath

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[2]


@dataclass(frozen=True)
class WeightedSample:
    """A finite measure ``sum_i w_i delta_{x_i}``; points have shape ``(K, d)``."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """``values`` has shape ``(J, K)``: one row of function values per test function."""
        return values @ self.weights


@dataclass(frozen=True)
class EmpiricalMeasurePath:
    """Path of the sub-probability measure ``mu^n(t_k)`` on a grid.

    ``mass[k]`` is the fraction alive and ``zeta_mean[k] = <zeta, mu^n(t_k)>``.
    ``ensemble`` is dropped by batch runners to save memory.
    """

    grid: TimeGrid
    mass: np.ndarray
    zeta_mean: np.ndarray
    hazard: HazardPath
    n: int
    ensemble: Optional[ParticleEnsemble] = None

    def measure_at(self, k: int) -> WeightedSample:
        if self.ensemble is None:
            raise ValueError("particle positions were not retained for this path")
        e = self.ensemble
        w = e.alive[:, k] / e.n
        return WeightedSample(e.positions[:, k, :], w)
