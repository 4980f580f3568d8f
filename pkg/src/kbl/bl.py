"""Finite dictionaries of bounded-Lipschitz test functions.

The bounded-Lipschitz distance is a supremum over all ``f`` with
``max(sup|f|, Lip(f)) <= 1``.  A fixed dictionary of such functions gives a
cheap deterministic *lower* bound, reported as the "dictionary distance".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import WeightedSample
from .errors import ConfigError
from .quadrature import gauss_hermite


@dataclass(frozen=True)
class BLFunction:
    """Test function with certified ``sup|f| <= sup_bound`` and ``Lip(f) <= lipschitz``."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    lipschitz: float

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


def clipped_affine(direction, offset: float) -> BLFunction:
    v = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm > 1 + 1e-12:
        raise ConfigError("clipped affine direction must have norm <= 1")
    return BLFunction(
        f"affine[{np.array2string(v, precision=3)},{offset:g}]",
        lambda x: np.clip(x @ v - offset, -1.0, 1.0),
        1.0, norm,
    )


def gaussian_bump(center, width: float) -> BLFunction:
    """``a exp(-|x-c|^2 / 2w^2)`` with ``a = min(1, w sqrt(e))`` so that Lip <= 1."""
    c = np.asarray(center, dtype=float)
    amp = min(1.0, width * math.sqrt(math.e))
    lip = amp / (width * math.sqrt(math.e))

    def f(x):
        r2 = np.sum((x - c) ** 2, axis=-1)
        return amp * np.exp(-0.5 * r2 / width**2)

    return BLFunction(f"bump[{np.array2string(c, precision=3)},{width:g}]", f, amp, lip)


def sinusoid(freq, phase: float) -> BLFunction:
    """``sin(<k,x> + phase) / max(1, |k|)``."""
    k = np.asarray(freq, dtype=float)
    scale = max(1.0, float(np.linalg.norm(k)))
    lip = float(np.linalg.norm(k)) / scale
    return BLFunction(
        f"sin[{np.array2string(k, precision=3)},{phase:.3f}]",
        lambda x: np.sin(x @ k + phase) / scale,
        1.0 / scale, lip,
    )


def constant_one() -> BLFunction:
    return BLFunction("one", lambda x: np.ones(x.shape[0]), 1.0, 0.0)


class BLDictionary:
    """An ordered list of test functions, each with ``||f||_BL <= 1``."""

    def __init__(self, functions: Sequence[BLFunction]):
        functions = list(functions)
        if not functions:
            raise ConfigError("BL dictionary must contain at least one function")
        for f in functions:
            if f.sup_bound > 1 + 1e-12 or f.lipschitz > 1 + 1e-12:
                raise ConfigError(f"{f.name} is not in the BL unit ball")
        self.functions = functions

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of every function at ``points`` (shape ``(K, d)``), as a ``(J, K)`` array."""
        points = np.asarray(points, dtype=float)
        return np.stack([f(points) for f in self.functions])


def _directions(d):
    dirs = [np.eye(d)[i] for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            for s in (1.0, -1.0):
                v = np.zeros(d)
                v[i], v[j] = 1.0, s
                dirs.append(v / math.sqrt(2.0))
    return dirs


def default_dictionary(d: int = 1, size: int = 64) -> BLDictionary:
    """Constant, clipped affine, Gaussian bump and sinusoid families, ``size`` functions in total."""
    if size < 4:
        raise ConfigError("default dictionary needs size >= 4")
    dirs = _directions(d)
    affine = [clipped_affine(s * v, c)
              for c in (0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0)
              for v in dirs for s in (1.0, -1.0)]
    bumps = [gaussian_bump(r * v, w)
             for w in (0.75, 1.5)
             for r in (0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0, 3.0, -3.0)
             for v in dirs if not (r == 0.0 and v is not dirs[0])]
    sines = [sinusoid(k * v, ph)
             for k in (0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0, 1.25, 1.5, 2.0,
                      2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 16.0)
             for v in dirs for ph in (0.0, 0.5 * math.pi)]
    n_aff = n_bump = (size - 1) // 4
    n_sin = size - 1 - n_aff - n_bump
    funcs = [constant_one()] + affine[:n_aff] + bumps[:n_bump] + sines[:n_sin]
    if len(funcs) < size:
        raise ConfigError(f"cannot build {size} distinct functions in dimension {d}")
    return BLDictionary(funcs)


@dataclass(frozen=True)
class GaussianMeasure:
    """``mass * N(0, variance I_d)``.

    In one dimension the integrals use composite Simpson on ``[-12 s, 12 s]``
    (dictionary members have kinks and high frequencies, which defeat
    Gauss-Hermite); in higher dimension a tensor Gauss-Hermite rule.
    """

    mass: float
    variance: float
    d: int = 1
    nodes: int = 64
    grid_points: int = 24001

    def integrate_dictionary(self, dictionary: BLDictionary) -> np.ndarray:
        s = math.sqrt(max(self.variance, 0.0))
        if s == 0.0:
            return self.mass * dictionary.evaluate(np.zeros((1, self.d)))[:, 0]
        if self.d == 1:
            x = np.linspace(-12.0 * s, 12.0 * s, self.grid_points)
            w = np.full(self.grid_points, 2.0)
            w[1::2] = 4.0
            w[0] = w[-1] = 1.0
            w *= (x[1] - x[0]) / 3.0 * np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
            return self.mass * (dictionary.evaluate(x[:, None]) @ w)
        nodes = self.nodes if self.d <= 2 else min(self.nodes, 16)
        pts, wts = gauss_hermite(nodes, self.d)
        return self.mass * (dictionary.evaluate(pts * s) @ wts)


def _integrals(measure, dictionary):
    if isinstance(measure, WeightedSample):
        return measure.integrate(dictionary.evaluate(measure.points))
    if hasattr(measure, "integrate_dictionary"):
        return measure.integrate_dictionary(dictionary)
    raise TypeError(f"cannot integrate against {type(measure).__name__}")


def bl_distance_lower(mu1, mu2, dictionary: BLDictionary) -> float:
    """``max_j |<mu1 - mu2, f_j>|`` over the dictionary: a lower bound on d_BL."""
    if dictionary is None or len(dictionary) == 0:
        raise ConfigError("empty dictionary")
    diff = _integrals(mu1, dictionary) - _integrals(mu2, dictionary)
    return float(np.max(np.abs(diff)))
