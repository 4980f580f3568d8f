"""Counter-based random streams (Philox4x64-10).

Every variate is a pure function of ``(seed, replica, domain, particle, index)``:

    key     = (seed, replica)
    counter = (block, particle, kind, domain)

where ``kind`` separates Gaussian from uniform draws and ``domain`` separates
unrelated consumers (particle system, fixed-point samples, quadrature).  A
block yields four 64-bit words, i.e. four uniforms or four Gaussians (two
Box-Muller pairs).  Nothing depends on call order, chunking or thread count,
so replicas and particle slices can be generated anywhere.
"""

from __future__ import annotations

import numba as nb
import numpy as np

GAUSSIAN = 0
UNIFORM = 1

DOMAIN_PARTICLES = 0
DOMAIN_THETA = 1
DOMAIN_QUADRATURE = 2

_U = nb.uint64
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    hl = a_hi * b_lo
    lh = a_lo * b_hi
    hh = a_hi * b_hi
    cross = (ll >> _S32) + (hl & _M32) + lh
    hi = hh + (hl >> _S32) + (cross >> _S32)
    lo = (cross << _S32) | (ll & _M32)
    return hi, lo


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64 with 10 rounds; returns the four output words."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _PHILOX_W0
            k1 = k1 + _PHILOX_W1
        hi0, lo0 = _mulhilo(_PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(_PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _to_unit(x):
    # open interval (0, 1): never returns 0 or 1
    return (float(x >> _S11) + 0.5) * _INV53


@nb.njit(cache=True, nogil=True)
def _fill_uniform(out, seed, replica, domain, first_particle):
    n, count = out.shape
    k0 = _U(seed)
    k1 = _U(replica)
    kind = _U(UNIFORM)
    dom = _U(domain)
    for i in range(n):
        pid = _U(first_particle + i)
        for b in range((count + 3) // 4):
            w0, w1, w2, w3 = philox4x64(_U(b), pid, kind, dom, k0, k1)
            j = 4 * b
            out[i, j] = _to_unit(w0)
            if j + 1 < count:
                out[i, j + 1] = _to_unit(w1)
            if j + 2 < count:
                out[i, j + 2] = _to_unit(w2)
            if j + 3 < count:
                out[i, j + 3] = _to_unit(w3)


@nb.njit(cache=True, nogil=True)
def _fill_normal(out, seed, replica, domain, first_particle):
    n, count = out.shape
    k0 = _U(seed)
    k1 = _U(replica)
    kind = _U(GAUSSIAN)
    dom = _U(domain)
    for i in range(n):
        pid = _U(first_particle + i)
        for b in range((count + 3) // 4):
            w0, w1, w2, w3 = philox4x64(_U(b), pid, kind, dom, k0, k1)
            r = np.sqrt(-2.0 * np.log(_to_unit(w0)))
            a = _TWO_PI * _to_unit(w1)
            g0 = r * np.cos(a)
            g1 = r * np.sin(a)
            r = np.sqrt(-2.0 * np.log(_to_unit(w2)))
            a = _TWO_PI * _to_unit(w3)
            g2 = r * np.cos(a)
            g3 = r * np.sin(a)
            j = 4 * b
            out[i, j] = g0
            if j + 1 < count:
                out[i, j + 1] = g1
            if j + 2 < count:
                out[i, j + 2] = g2
            if j + 3 < count:
                out[i, j + 3] = g3


def _check_ids(seed, replica, first_particle):
    for name, v in (("seed", seed), ("replica", replica), ("particle", first_particle)):
        if not 0 <= int(v) < 2**64:
            raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {v}")


def uniforms(seed: int, replica: int, n_particles: int, count: int, *,
             domain: int = DOMAIN_PARTICLES, first_particle: int = 0) -> np.ndarray:
    """Uniforms on (0, 1) of shape ``(n_particles, count)``; row ``i`` is particle ``first_particle + i``."""
    _check_ids(seed, replica, first_particle)
    out = np.empty((n_particles, count))
    if n_particles and count:
        _fill_uniform(out, int(seed), int(replica), int(domain), int(first_particle))
    return out


def normals(seed: int, replica: int, n_particles: int, count: int, *,
            domain: int = DOMAIN_PARTICLES, first_particle: int = 0) -> np.ndarray:
    """Standard Gaussians of shape ``(n_particles, count)``, same addressing as :func:`uniforms`."""
    _check_ids(seed, replica, first_particle)
    out = np.empty((n_particles, count))
    if n_particles and count:
        _fill_normal(out, int(seed), int(replica), int(domain), int(first_particle))
    return out


class ParticleStream:
    """The variate stream owned by one particle of one replica.

    Value-like: two streams with equal identifiers produce identical draws,
    and ``normal(k)`` always returns the first ``k`` Gaussians of the stream.
    """

    __slots__ = ("seed", "particle_id", "replica_id", "domain")

    def __init__(self, seed, particle_id, replica_id, domain=DOMAIN_PARTICLES):
        _check_ids(seed, replica_id, particle_id)
        self.seed = int(seed)
        self.particle_id = int(particle_id)
        self.replica_id = int(replica_id)
        self.domain = int(domain)

    def normal(self, count):
        return normals(self.seed, self.replica_id, 1, count,
                       domain=self.domain, first_particle=self.particle_id)[0]

    def uniform(self, count):
        return uniforms(self.seed, self.replica_id, 1, count,
                        domain=self.domain, first_particle=self.particle_id)[0]

    def __eq__(self, other):
        return (isinstance(other, ParticleStream)
                and (self.seed, self.particle_id, self.replica_id, self.domain)
                == (other.seed, other.particle_id, other.replica_id, other.domain))

    def __hash__(self):
        return hash((self.seed, self.particle_id, self.replica_id, self.domain))

    def __repr__(self):
        return (f"ParticleStream(seed={self.seed}, particle_id={self.particle_id}, "
                f"replica_id={self.replica_id}, domain={self.domain})")


def rng_stream(seed: int, particle_id: int, replica_id: int) -> ParticleStream:
    return ParticleStream(seed, particle_id, replica_id)
