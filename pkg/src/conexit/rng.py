"""Counter-based random streams.

Every Monte Carlo draw gets its own stream keyed by ``(seed, index)``, so the
values a path sees do not depend on how paths are split between workers.

Two flavours are provided:

* compiled helpers (``stream_key``, ``uniform``, ``normal``,
  ``fill_normals``, ``exponential``) for use inside numba kernels.  The
  stream for key ``k`` is ``mix64(k + n * GOLDEN)`` for ``n = 1, 2, ...``
  (SplitMix64 run in counter mode).  Normals use the 128-layer ziggurat
  in Doornik's ZIGNOR form, which is exact;
* ``block_generator`` which returns a numpy ``Generator`` backed by Philox
  with a 128-bit key built from ``(seed, block)`` for vectorised sampling.
"""

import math

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


def as_seed(seed):
    """Coerce a Python integer seed to an unsigned 64-bit value."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return np.uint64(int(seed) & MASK64)


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def stream_key(seed, index):
    """Key of the stream owned by draw ``index`` under ``seed``."""
    return mix64(mix64(seed + GOLDEN) ^ mix64((np.uint64(index) + _ONE) * GOLDEN))


@njit(inline="always")
def uniform(key, ctr):
    """Uniform on the open interval (0, 1); returns (value, next counter)."""
    bits = mix64(key + (ctr + _ONE) * GOLDEN)
    return (float(bits >> _S11) + 0.5) * _INV53, ctr + _ONE


ZIG_R = 3.442619855899
ZIG_V = 9.91256303526217e-3
_M7 = np.uint64(0x7F)


def _ziggurat_tables(layers=128):
    x = np.zeros(layers + 1)
    x[0] = ZIG_V / math.exp(-0.5 * ZIG_R * ZIG_R)
    x[1] = ZIG_R
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(ZIG_V / x[i - 1] + math.exp(-0.5 * x[i - 1] ** 2)))
    ratio = np.zeros(layers)
    ratio[:] = x[1:] / x[:-1]
    return x, ratio


ZIG_X, ZIG_RATIO = _ziggurat_tables()


@njit(inline="always")
def normal(key, ctr):
    """One N(0, 1) variate; returns (value, next counter)."""
    while True:
        bits = mix64(key + (ctr + _ONE) * GOLDEN)
        ctr += _ONE
        u = 2.0 * ((float(bits >> _S11) + 0.5) * _INV53) - 1.0
        i = int(bits & _M7)
        if abs(u) < ZIG_RATIO[i]:
            return u * ZIG_X[i], ctr
        if i == 0:
            # base strip: sample the tail beyond R
            while True:
                a, ctr = uniform(key, ctr)
                c, ctr = uniform(key, ctr)
                x = math.log(a) / ZIG_R
                if -2.0 * math.log(c) >= x * x:
                    break
            return (x - ZIG_R if u < 0.0 else ZIG_R - x), ctr
        x = u * ZIG_X[i]
        f0 = math.exp(-0.5 * (ZIG_X[i] * ZIG_X[i] - x * x))
        f1 = math.exp(-0.5 * (ZIG_X[i + 1] * ZIG_X[i + 1] - x * x))
        w, ctr = uniform(key, ctr)
        if f1 + w * (f0 - f1) < 1.0:
            return x, ctr


@njit(inline="always")
def fill_normals(key, ctr, buf):
    """Overwrite ``buf`` with the next normals of the stream."""
    for j in range(buf.shape[0]):
        buf[j], ctr = normal(key, ctr)
    return ctr


@njit(inline="always")
def exponential(key, ctr, rate):
    """Exp(rate) variate; +inf when rate == 0."""
    if rate <= 0.0:
        return np.inf, ctr
    u, ctr = uniform(key, ctr)
    return -math.log(u) / rate, ctr


@njit(cache=True)
def uniform_block(seed, index, n):
    """First ``n`` uniforms of one stream (used by the tests)."""
    key = stream_key(seed, index)
    ctr = np.uint64(0)
    out = np.empty(n)
    for i in range(n):
        out[i], ctr = uniform(key, ctr)
    return out


@njit(cache=True)
def normal_block(seed, index, n):
    key = stream_key(seed, index)
    out = np.empty(n)
    fill_normals(key, np.uint64(0), out)
    return out


def block_generator(seed, block):
    """numpy Generator for sample block ``block``; Philox is counter based."""
    key = (int(seed) & MASK64) | ((int(block) & MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
