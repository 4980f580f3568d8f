"""Self-consistent survival equation for a sampled law of (path, threshold).

Given samples ``(x_i, s_i)`` of a controlled particle path and its threshold,
find the hazard ``H`` with

    H(t) = int_0^t (1/M) sum_i zeta(x_i(s)) 1{s_i > H(s)} ds,

whose measure path is ``(1/M) sum_i delta_{x_i(t)} 1{s_i > H(t)}``.  Solved
by (damped) Picard iteration on ``H`` with trapezoid time integration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .bl import BLDictionary, bl_distance_lower, default_dictionary
from .core import HazardPath, KillingFunction, TimeGrid, WeightedSample, cumulative_trapezoid
from .errors import ConfigError, NonConvergenceError
from .sim import ControlSpec, controlled_paths, simulate_controlled

log = logging.getLogger(__name__)

# With finitely many samples the map jumps whenever H crosses a threshold, so an
# exact fixed point may not exist; shrinking w lets the iterates settle at the jump.
_MIN_DAMPING = 2.0**-40


@dataclass(frozen=True)
class ThetaSample:
    """Monte Carlo representation of a law on (controlled path, threshold)."""

    paths: np.ndarray  # (M, m+1, d)
    sigmas: np.ndarray  # (M,)
    control: ControlSpec
    drift_samples: np.ndarray  # (M,) realized 0.5 int |u|^2

    def __post_init__(self):
        if self.paths.ndim != 3 or self.paths.shape[0] != len(self.sigmas):
            raise ConfigError("paths must be (M, m+1, d) with one sigma per path")
        if len(self.sigmas) < 1:
            raise ConfigError("need at least one sample")
        if np.any(~(self.sigmas > 0)):
            raise ConfigError("thresholds must be positive")
        if np.any(self.paths[:, 0, :] != 0):
            raise ConfigError("paths must start at the origin")

    @property
    def M(self) -> int:
        return len(self.sigmas)


def sample_theta(control: ControlSpec, M: int, d: int, grid: TimeGrid, seed: int,
                 replica: int = 0) -> ThetaSample:
    """Draw ``M`` independent controlled single-particle (path, threshold) pairs.

    Uses a random-stream domain disjoint from the particle engines.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    paths, sigmas, drift_cost, _ = controlled_paths(control, M, d, grid, seed, replica,
                                                    domain=rng.DOMAIN_THETA)
    return ThetaSample(paths, sigmas, control, drift_cost)


@dataclass(frozen=True)
class FixedPointResult:
    hazard: HazardPath
    mass: np.ndarray
    zeta_mean: np.ndarray
    iterations: int
    residual: float
    damping: float
    history: tuple = ()  # hazard iterates, kept only on request

    @property
    def H(self) -> np.ndarray:
        return self.hazard.H


def _zeta_mean(zvals, sigmas, H):
    # strict inequality: a threshold equal to the hazard counts as killed
    alive = sigmas[:, None] > H[None, :]
    return (zvals * alive).mean(axis=0) if zvals.ndim == 2 else zvals * alive.mean(axis=0)


def solve_fixed_point(theta: ThetaSample, zeta: KillingFunction, grid: TimeGrid, *,
                      tol: float = 1e-6, max_iter: int = 200, damping: float = 1.0,
                      init: Optional[np.ndarray] = None, keep_history: bool = False) -> FixedPointResult:
    """Picard iteration ``H <- (1 - w) H + w Trap(m(H))`` until the sup-norm update is below ``tol``.

    The damping ``w`` is halved whenever the residual fails to decrease; this
    also breaks the small two-cycles caused by the discrete empirical indicator.  Raises
    :class:`NonConvergenceError` after ``max_iter`` iterations.
    """
    if not tol > 0:
        raise ConfigError("tol must be > 0")
    if not 0 < damping <= 1:
        raise ConfigError("damping must lie in (0, 1]")
    if theta.paths.shape[1] != grid.m + 1:
        raise ConfigError("sample paths do not match the grid")
    if zeta.is_constant:
        zvals = np.float64(zeta.param)
    else:
        zvals = zeta.evaluate(theta.paths)
    sig = theta.sigmas
    H = np.zeros(grid.m + 1) if init is None else np.array(init, dtype=float)
    if H.shape != (grid.m + 1,):
        raise ConfigError("initial hazard must have length m + 1")
    H[0] = 0.0
    w = float(damping)
    history = [H.copy()] if keep_history else []
    prev_res = math.inf
    res = math.inf
    for it in range(1, max_iter + 1):
        target = cumulative_trapezoid(_zeta_mean(zvals, sig, H), grid.dt)
        H_new = (1.0 - w) * H + w * target
        res = float(np.max(np.abs(H_new - H)))
        H = H_new
        if keep_history:
            history.append(H.copy())
        if res < tol:
            zm = _zeta_mean(zvals, sig, H)
            mass = (sig[:, None] > H[None, :]).mean(axis=0)
            return FixedPointResult(HazardPath(grid, H), mass, zm, it, res, w, tuple(history))
        if res >= prev_res and w > _MIN_DAMPING:
            w *= 0.5
            log.debug("fixed point: residual stalled at %.3g, damping now %g", res, w)
        prev_res = res
    raise NonConvergenceError(
        f"fixed point did not converge in {max_iter} iterations (residual {res:.3g})", res, max_iter)


def j_cost(theta: ThetaSample) -> float:
    """Control cost: mean drift energy plus relative entropy of the threshold law."""
    control = theta.control
    if control is None:
        raise ConfigError("theta sample carries no control parameters")
    if control.is_zero:
        return 0.0
    entropy = getattr(control.threshold, "entropy", None)
    if entropy is None:
        raise ConfigError(f"unknown threshold family {type(control.threshold).__name__}")
    return float(np.mean(theta.drift_samples)) + float(entropy())


@dataclass(frozen=True)
class SelfConsistencyReport:
    sup_mass_deviation: float
    dictionary_distance: float
    tolerance: float
    simulated_mass: np.ndarray
    fixed_point_mass: np.ndarray
    fixed_point: FixedPointResult

    @property
    def flagged(self) -> bool:
        return self.sup_mass_deviation > self.tolerance


def self_consistency_check(control: ControlSpec, n: int, M: int, grid: TimeGrid,
                           zeta: KillingFunction, seed: int, *, d: int = 1, tolerance: float = 0.02,
                           dictionary: Optional[BLDictionary] = None, fp_tol: float = 1e-6,
                           max_iter: int = 200) -> SelfConsistencyReport:
    """Compare the controlled n-particle system with the fixed point of fresh single-particle samples."""
    path, ens, _ = simulate_controlled(n, d, grid, zeta, control, seed, 0)
    theta = sample_theta(control, M, d, grid, seed, 0)
    fp = solve_fixed_point(theta, zeta, grid, tol=fp_tol, max_iter=max_iter)
    dev = float(np.max(np.abs(path.mass - fp.mass)))
    dictionary = dictionary or default_dictionary(d)
    alive_T = theta.sigmas > fp.H[-1]
    fp_measure = WeightedSample(theta.paths[:, -1, :], alive_T / theta.M)
    dist = bl_distance_lower(path.measure_at(grid.m), fp_measure, dictionary)
    return SelfConsistencyReport(dev, dist, tolerance, path.mass, fp.mass, fp)
