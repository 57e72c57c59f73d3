"""Exponential functional I_{e_lam}(alpha xi) = int_0^{e_lam} exp(alpha xi_s) ds.

``e_lam`` is an independent Exp(lam) clock and xi may itself be killed at
rate q, so the integral runs up to zeta' ~ Exp(lam + q).

For xi = sigma B + b t there is an exact sampler.  Rescaling time by
s = alpha^2 sigma^2 / 4 turns alpha xi into 2(W_u + mu u) with
mu = 2b/(alpha sigma^2), and Yor's identity then gives

    I =_d (4 / (alpha^2 sigma^2)) * Z / (2 G),

with Z ~ Beta(1, a), G ~ Gamma(kappa), a = kappa + 2b/(alpha sigma^2) and
kappa solving phi(alpha kappa) = lam.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit, prange
from scipy import integrate, special, stats

from . import io
from ._paths import BLOCK, NBUF, PathParams, jump_size, next_normal, worker_threads
from .errors import AssumptionError, MonteCarloWarning, ValidationError
from .levy import LevyModel, brownian_model, laplace_exponent_derivative, solve_kappa, validate_assumptions
from .rng import as_seed, block_generator, exponential, stream_key

__all__ = [
    "ExpFunSampleSet",
    "TailEstimate",
    "MomentEstimate",
    "ConstantEstimate",
    "sample_exp_functional",
    "yor_exact_sampler",
    "closed_form_moment_bm",
    "bm_tail_probability",
    "mc_moment",
    "theorem_constant",
    "tail_estimate",
    "wilson_interval",
    "save_samples",
]

Z95 = float(stats.norm.ppf(0.975))
EXACT_BLOCK = 1 << 16


@dataclass
class ExpFunSampleSet:
    """I.i.d. draws of I_{e_lam}(alpha xi).  ``dt == 0`` marks exact draws."""

    values: np.ndarray
    alpha: float
    lam: float
    dt: float
    seed: int
    count: int
    model: Optional[LevyModel] = None
    lifetimes: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.shape[0] != self.count:
            raise ValidationError("values must be a 1-D array of length count")

    def params(self):
        return {
            "alpha": self.alpha,
            "lambda": self.lam,
            "dt": self.dt,
            "seed": int(self.seed),
            "count": int(self.count),
            "model": None if self.model is None else self.model.to_dict(),
        }


@dataclass
class TailEstimate:
    thresholds: np.ndarray
    survival: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    count: int
    seed: int

    def to_dict(self):
        return {"thresholds": self.thresholds, "survival": self.survival, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "count": self.count, "seed": int(self.seed)}

    def rows(self, kappa=None):
        t = self.thresholds
        scaled = t**kappa * self.survival if kappa is not None else np.full_like(t, np.nan)
        return list(zip(t, self.survival, self.ci_low, self.ci_high, scaled))


class MomentEstimate(NamedTuple):
    value: float
    se: float
    ci_low: float
    ci_high: float
    small_share: float


class ConstantEstimate(NamedTuple):
    """Limit of t^kappa P(I > t) with a 95% interval (degenerate if exact)."""

    value: float
    ci_low: float
    ci_high: float
    kappa: float
    phi_prime: float
    moment: float
    source: str


def _check_positive(name, v):
    if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
        raise ValidationError(f"{name} must be a positive finite number, got {v!r}")


@njit(parallel=True, cache=True)
def _expfun_kernel(seed, count, alpha, total_rate, dt, drift, sigma, kind, jrate, atoms, cum,
                   decay, out, life):
    nblocks = (count + BLOCK - 1) // BLOCK
    sdt = math.sqrt(dt)
    for blk in prange(nblocks):
        buf = np.empty(NBUF)
        stop = min(count, (blk + 1) * BLOCK)
        for i in range(blk * BLOCK, stop):
            key = stream_key(seed, i)
            ctr = np.uint64(0)
            zeta, ctr = exponential(key, ctr, total_rate)
            tj, ctr = exponential(key, ctr, jrate)
            t = 0.0
            x = 0.0
            ex = 1.0
            acc = 0.0
            pos = NBUF
            while t < zeta:
                sh = sdt
                if zeta - t <= dt:
                    h = zeta - t
                    t_new = zeta
                    sh = math.sqrt(h)
                else:
                    h = dt
                    t_new = t + dt
                jumped = False
                if tj <= t_new:
                    h = tj - t
                    t_new = tj
                    sh = math.sqrt(h)
                    jumped = True
                x_new = x + drift * h
                if sigma > 0.0:
                    z, ctr, pos = next_normal(key, ctr, buf, pos)
                    x_new += sigma * sh * z
                ex_new = math.exp(alpha * x_new) if x_new != 0.0 else 1.0
                acc += 0.5 * h * (ex + ex_new)
                if jumped:
                    y, ctr = jump_size(key, ctr, kind, atoms, cum, decay)
                    x_new += y
                    ex_new = math.exp(alpha * x_new)
                    step, ctr = exponential(key, ctr, jrate)
                    tj += step
                x = x_new
                ex = ex_new
                t = t_new
            out[i] = acc
            life[i] = zeta


def sample_exp_functional(model: LevyModel, alpha: float, lam: float, dt: float, count: int,
                          seed: int, workers: Optional[int] = None) -> ExpFunSampleSet:
    """Path sampler for I_{e_lam}(alpha xi).

    Each draw samples its lifetime zeta' ~ Exp(lam + q), runs xi by Euler
    steps of size ``dt`` (Gaussian part exact at the nodes, steps cut at
    jump times) and integrates exp(alpha xi) by the trapezoid rule.

    Parameters
    ----------
    model : LevyModel
    alpha, lam : float
        Self-similarity index and clock rate, both positive.
    dt : float
        Time step of the Euler scheme.
    count : int
        Number of draws.
    seed : int
        64-bit seed; draw ``i`` uses the stream keyed by ``(seed, i)``.
    workers : int, optional
        Thread count for the compiled loop.  Output does not depend on it.
    """
    _check_positive("alpha", alpha)
    _check_positive("lambda", lam)
    _check_positive("dt", dt)
    count = int(count)
    if count < 1:
        raise ValidationError("count must be >= 1")
    pp = PathParams(model)
    key = as_seed(seed)
    out = np.empty(count)
    life = np.empty(count)
    with worker_threads(workers):
        _expfun_kernel(key, count, float(alpha), lam + model.kill_rate, float(dt), pp.drift,
                       pp.sigma, pp.kind, pp.rate, pp.atoms, pp.cum, pp.decay, out, life)
    return ExpFunSampleSet(out, float(alpha), float(lam), float(dt), int(seed), count, model, life)


def _bm_kappa_a(alpha, sigma, b, lam):
    _check_positive("alpha", alpha)
    _check_positive("sigma", sigma)
    _check_positive("lambda", lam)
    kappa = solve_kappa(brownian_model(sigma, b), alpha, lam)
    a = kappa + 2.0 * b / (alpha * sigma * sigma)
    return kappa, a


def yor_exact_sampler(alpha: float, sigma: float, b: float, lam: float, count: int,
                      seed: int) -> ExpFunSampleSet:
    """Exact draws of I_{e_lam}(alpha xi) for xi = sigma B + b t."""
    kappa, a = _bm_kappa_a(alpha, sigma, b, lam)
    count = int(count)
    if count < 1:
        raise ValidationError("count must be >= 1")
    scale = 4.0 / (alpha * alpha * sigma * sigma)
    out = np.empty(count)
    for blk, start in enumerate(range(0, count, EXACT_BLOCK)):
        n = min(EXACT_BLOCK, count - start)
        rng = block_generator(seed, blk)
        z = rng.beta(1.0, a, n)
        g = rng.gamma(kappa, 1.0, n)
        out[start:start + n] = scale * z / (2.0 * g)
    return ExpFunSampleSet(out, float(alpha), float(lam), 0.0, int(seed), count,
                           brownian_model(sigma, b))


def closed_form_moment_bm(alpha: float, sigma: float, b: float, lam: float) -> float:
    """E[I^{kappa-1}] for xi = sigma B + b t.

    Equals (alpha^2 sigma^2 / 4)^{1-kappa} 2^{1-kappa} Gamma(a+1) / Gamma(kappa+a);
    the first factor is 1 when alpha * sigma = 2.
    """
    kappa, a = _bm_kappa_a(alpha, sigma, b, lam)
    c = alpha * alpha * sigma * sigma / 4.0
    logm = (1.0 - kappa) * math.log(2.0 * c) + special.gammaln(a + 1.0) - special.gammaln(kappa + a)
    return float(math.exp(logm))


def bm_tail_probability(alpha: float, sigma: float, b: float, lam: float, c):
    """P(I_{e_lam}(alpha xi) > c) for xi = sigma B + b t, by one quadrature.

    With Z = 1 - V, V ~ Beta(a, 1): P(s Z/(2G) > c) = E[P(G < s Z / (2c))],
    integrated against the density a v^{a-1} with an algebraic endpoint weight.
    """
    kappa, a = _bm_kappa_a(alpha, sigma, b, lam)
    s = 4.0 / (alpha * alpha * sigma * sigma)
    cs = np.atleast_1d(np.asarray(c, dtype=float))
    out = np.empty(cs.shape)
    for k, ck in enumerate(cs):
        if ck <= 0:
            out[k] = 1.0
            continue
        f = lambda v: a * special.gammainc(kappa, s * (1.0 - v) / (2.0 * ck))
        val = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(a - 1.0, 0.0), epsabs=1e-15, epsrel=1e-11,
                             limit=200)[0]
        out[k] = min(1.0, max(0.0, val))
    return out if np.ndim(c) else float(out[0])


def mc_moment(samples: ExpFunSampleSet, power: float, warn_share: float = 0.1) -> MomentEstimate:
    """Sample mean of I^power with a normal 95% interval.

    For negative powers the estimate is driven by the smallest draws; if the
    smallest 0.1% of them carry more than ``warn_share`` of the sum a
    MonteCarloWarning is issued.
    """
    v = samples.values
    w = v**power
    n = v.shape[0]
    mean = float(np.mean(w))
    se = float(np.std(w, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    k = max(1, math.ceil(0.001 * n))
    idx = np.argpartition(v, k - 1)[:k] if k < n else np.arange(n)
    share = float(np.sum(w[idx]) / np.sum(w))
    if power < 0 and share > warn_share:
        warnings.warn(f"smallest 0.1% of draws carry {share:.1%} of the moment estimate; "
                      "prefer the exact sampler or the closed form", MonteCarloWarning, stacklevel=2)
    return MomentEstimate(mean, se, mean - Z95 * se, mean + Z95 * se, share)


def theorem_constant(model: LevyModel, alpha: float, lam: float, moment=None) -> ConstantEstimate:
    """Limit of t^kappa P(I_{e_lam}(alpha xi) > t), i.e. E[I^{kappa-1}] / (alpha phi'(alpha kappa)).

    Parameters
    ----------
    moment : None, float or ExpFunSampleSet
        ``None`` uses the closed form (Brownian models only); a float is
        taken as E[I^{kappa-1}]; a sample set gives a Monte Carlo moment and
        the returned interval reflects its 95% CI.
    """
    report = validate_assumptions(model, alpha, 0.0)
    if not report.non_arithmetic:
        raise AssumptionError("xi is arithmetic; the tail constant does not exist", assumption=2)
    kappa = solve_kappa(model, alpha, lam)
    dphi = laplace_exponent_derivative(model, alpha * kappa)
    denom = alpha * dphi
    if moment is None:
        if not model.is_brownian:
            raise ValidationError("closed-form moment needs a Brownian model; pass samples")
        m = closed_form_moment_bm(alpha, model.sigma, model.drift, lam)
        return ConstantEstimate(m / denom, m / denom, m / denom, kappa, dphi, m, "closed_form")
    if isinstance(moment, ExpFunSampleSet):
        est = mc_moment(moment, kappa - 1.0)
        return ConstantEstimate(est.value / denom, est.ci_low / denom, est.ci_high / denom, kappa,
                                dphi, est.value, "monte_carlo")
    m = float(moment)
    return ConstantEstimate(m / denom, m / denom, m / denom, kappa, dphi, m, "supplied")


def wilson_interval(successes, n, z=Z95):
    """Wilson score interval for binomial proportions (vectorised)."""
    k = np.asarray(successes, dtype=float)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4.0 * n * n)) / denom
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)


def tail_estimate(samples: ExpFunSampleSet, thresholds) -> TailEstimate:
    """Empirical P(I > t) on increasing thresholds with Wilson 95% intervals."""
    t = np.asarray(thresholds, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValidationError("thresholds must be positive and strictly increasing")
    v = np.sort(samples.values)
    n = v.shape[0]
    above = n - np.searchsorted(v, t, side="right")
    lo, hi = wilson_interval(above, n)
    surv = above / n
    return TailEstimate(t, surv, np.minimum(lo, surv), np.maximum(hi, surv), n, samples.seed)


def save_samples(samples: ExpFunSampleSet, path):
    """Single-column CSV plus ``<path>.json`` with parameters and seed."""
    io.write_csv(path, ["value"], [(v,) for v in samples.values])
    io.write_json(str(path) + ".json", samples.params())
