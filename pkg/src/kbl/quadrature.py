"""Gauss rules for Gaussian and exponential expectations."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _hermite_1d(nodes: int):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2.0 * np.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_hermite(nodes: int, d: int = 1):
    """Tensor Gauss-Hermite rule for ``E f(Z)``, ``Z ~ N(0, I_d)``.

    Returns points of shape ``(nodes**d, d)`` and weights summing to one.
    """
    x, w = _hermite_1d(nodes)
    if d == 1:
        return x[:, None].copy(), w.copy()
    pts = np.array(list(itertools.product(x, repeat=d)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return pts, wts


@lru_cache(maxsize=None)
def _laguerre(nodes: int):
    x, w = np.polynomial.laguerre.laggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_laguerre(nodes: int):
    """Rule for ``E f(X)``, ``X ~ Exp(1)``: points and weights (weights sum to one)."""
    x, w = _laguerre(nodes)
    return x.copy(), w.copy()
