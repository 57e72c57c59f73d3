"""Legendre functions of the first kind P_nu(x) for real degree nu.

P_nu(x) = 2F1(-nu, nu + 1; 1; (1 - x)/2).  Summing that series directly is
hopeless for large nu (the terms reach exp(2 nu sqrt(z)) before they
cancel), so only the base degrees mu = frac(nu) and mu - 1 are summed, where
every coefficient is bounded, and the three-term recurrence

    (k + 1) P_{k+1} = (2k + 1) x P_k - k P_{k-1}

carries them up to nu.  On (-1, 1] the recurrence is neutrally stable since
P and Q oscillate with comparable amplitude.
"""

import math

import numpy as np
from numba import njit

SERIES_TOL = 1e-16
MAX_TERMS = 10_000_000


@njit(cache=True)
def _base_series(nu, z):
    # 2F1(-nu, nu+1; 1; z) for -1 <= nu < 1
    a = -nu
    b = nu + 1.0
    s = 1.0
    term = 1.0
    tail = 1.0 / (1.0 - z) if z < 1.0 else np.inf
    for n in range(MAX_TERMS):
        term *= (a + n) * (b + n) / ((n + 1.0) * (n + 1.0)) * z
        s += term
        if term == 0.0 or abs(term) * tail <= SERIES_TOL * max(1.0, abs(s)):
            return s
    raise RuntimeError("Legendre base series did not converge")


@njit(cache=True)
def legendre_p_scalar(nu, x):
    if x > 1.0 or x <= -1.0:
        raise ValueError("x must lie in (-1, 1]")
    if nu < -0.5:
        nu = -nu - 1.0
    z = 0.5 * (1.0 - x)
    n = int(math.floor(nu))
    mu = nu - n
    if n < 0:
        # -1/2 <= nu < 0
        return _base_series(nu, z)
    p_prev = _base_series(mu - 1.0, z)
    p = _base_series(mu, z)
    for k in range(n):
        d = mu + k
        p_next = ((2.0 * d + 1.0) * x * p - d * p_prev) / (d + 1.0)
        p_prev = p
        p = p_next
    return p


@njit(cache=True)
def legendre_p_array(nu, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = legendre_p_scalar(nu, xs[i])
    return out


def legendre_p(nu, x):
    """P_nu(x) for real ``nu`` and ``x`` in (-1, 1]; ``x`` may be an array."""
    xa = np.asarray(x, dtype=float)
    if xa.ndim == 0:
        return float(legendre_p_scalar(float(nu), float(xa)))
    flat = np.ascontiguousarray(xa.ravel())
    return legendre_p_array(float(nu), flat).reshape(xa.shape)


@njit(cache=True)
def scan_sign_changes(x0, step, count, nu_max):
    """Brackets [nu_k, nu_k + step] of the first ``count`` zeros of nu -> P_nu(x0).

    Grid points where P vanishes exactly are returned as degenerate brackets.
    Returns the brackets found and the last degree scanned.
    """
    out = np.empty((count, 2))
    found = 0
    k = 0
    nu = 0.0
    prev = legendre_p_scalar(nu, x0)
    while found < count:
        k += 1
        nu = k * step
        if nu > nu_max:
            break
        cur = legendre_p_scalar(nu, x0)
        if cur == 0.0:
            out[found, 0] = nu
            out[found, 1] = nu
            found += 1
        elif prev != 0.0 and (prev < 0.0) != (cur < 0.0):
            out[found, 0] = nu - step
            out[found, 1] = nu
            found += 1
        prev = cur
    return out[:found], nu
