"""Monte Carlo estimators of P_x(tau_C > t) for a cone C.

Two estimators share one output type:

* ``direct_bm_exit`` runs d-dimensional Brownian paths and checks cone
  membership at the time nodes, optionally weighting each step by the
  probability that the Brownian bridge between two inside nodes did not
  cross the boundary.
* ``factorized_exit`` uses the skew product.  With clock A(t) = tau(|x|^-alpha t),
  tau the right inverse of s -> I_s(alpha xi), we have
  P_x(tau_C > t) = E[S(A(t)); t < T_0] where S(u) = P_theta(tau_D > u) is the
  angular survival series.  Each path of xi contributes S(A(t)) instead of
  an exit indicator, so the radial randomness is the only noise left.

Every path owns a counter-based stream keyed by (seed, path index) and
per-block partial sums are reduced in a fixed order, so estimates do not
depend on the number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit, prange

from . import io
from ._paths import BLOCK, NBUF, PathParams, jump_size, next_normal, worker_threads
from .errors import MonteCarloWarning, TruncationWarning, ValidationError
from .expfun import Z95, wilson_interval
from .levy import LevyModel, brownian_model
from .rng import as_seed, exponential, stream_key
from .spectral import ConeSpec, SpectralMode, mode_coefficients

__all__ = [
    "StartPoint",
    "ExitSurvivalEstimate",
    "SelfSimilarityDiagnostic",
    "brownian_lamperti_model",
    "direct_bm_exit",
    "factorized_exit",
    "self_similarity_check",
    "save_estimate",
]


@dataclass(frozen=True)
class StartPoint:
    """|x| and the angular coordinate of x/|x| (polar angle for d=2, angle to the axis for d=3)."""

    radius: float
    angular: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValidationError(f"radius must be positive, got {self.radius}")

    def check(self, spec: ConeSpec):
        if not spec.contains(self.angular):
            raise ValidationError(f"angular coordinate {self.angular} is not inside the cone")
        if spec.dimension == 2 and not 0 < self.angular < spec.angle:
            raise ValidationError("angular coordinate must be strictly inside the wedge")

    def to_dict(self):
        return {"radius": self.radius, "angular": self.angular}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(float(d["radius"]), float(d["angular"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed start point: {exc}") from exc


@dataclass
class ExitSurvivalEstimate:
    t_grid: np.ndarray
    survival: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    se: np.ndarray
    method: str
    count: int
    seed: int
    dt: float
    diagnostics: dict = field(default_factory=dict)

    def scaled(self, kappa):
        return self.t_grid**kappa * self.survival

    def rows(self, kappa=None):
        scaled = self.scaled(kappa) if kappa is not None else np.full_like(self.t_grid, np.nan)
        return list(zip(self.t_grid, self.survival, self.ci_low, self.ci_high, scaled))

    def to_dict(self):
        return {
            "t_grid": self.t_grid, "survival": self.survival, "ci_low": self.ci_low,
            "ci_high": self.ci_high, "se": self.se, "method": self.method, "count": self.count,
            "seed": int(self.seed), "dt": self.dt, "diagnostics": self.diagnostics,
        }


def save_estimate(est: ExitSurvivalEstimate, path, kappa=None):
    io.write_csv(path, ["t", "survival", "ci_low", "ci_high", "scaled"], est.rows(kappa))


def brownian_lamperti_model(dimension: int) -> LevyModel:
    """xi for the radial part of d-dim Brownian motion: B_s + (d/2 - 1) s."""
    return brownian_model(1.0, dimension / 2.0 - 1.0)


def _check_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be positive, finite and strictly increasing")
    return t


def _check_run(dt, count):
    if not (math.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")
    count = int(count)
    if count < 1:
        raise ValidationError("count must be >= 1")
    return float(dt), count


def _schedule(t_grid, dt):
    """Step sizes hitting every threshold exactly, and the node index of each threshold."""
    n = int(math.floor(t_grid[-1] / dt + 1e-9))
    regular = dt * np.arange(1, n + 1)
    keep = np.ones(n, dtype=bool)
    for t in t_grid:
        keep &= np.abs(regular - t) > 1e-9 * dt
    nodes = np.union1d(regular[keep], t_grid)
    steps = np.diff(np.concatenate(([0.0], nodes)))
    idx = np.searchsorted(nodes, t_grid)
    return steps, idx.astype(np.int64)


# ---------------------------------------------------------------------------
# direct estimator


@njit(inline="always")
def _inside(p0, p1, p2, dim, theta0, half_space):
    if dim == 2:
        if half_space:
            return p1 > 0.0
        ang = math.atan2(p1, p0)
        if ang < 0.0:
            ang += 2.0 * math.pi
        return 0.0 < ang < theta0
    if half_space:
        return p2 > 0.0
    r = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
    return r > 0.0 and p2 > r * math.cos(theta0)


@njit(inline="always")
def _ray_distance(p0, p1, u0, u1):
    proj = p0 * u0 + p1 * u1
    if proj > 0.0:
        return abs(p0 * u1 - p1 * u0)
    return math.sqrt(p0 * p0 + p1 * p1)


@njit(inline="always")
def _bridge_factor(p0, p1, p2, q0, q1, q2, h, dim, theta0, half_space):
    # probability that the bridge between two inside nodes stays inside,
    # treating each boundary piece as a flat wall (exact for half-spaces and the quadrant)
    if dim == 2:
        if half_space:
            return -math.expm1(-2.0 * p1 * q1 / h)
        c = math.cos(theta0)
        s = math.sin(theta0)
        d0 = _ray_distance(p0, p1, 1.0, 0.0)
        e0 = _ray_distance(q0, q1, 1.0, 0.0)
        d1 = _ray_distance(p0, p1, c, s)
        e1 = _ray_distance(q0, q1, c, s)
        return -math.expm1(-2.0 * d0 * e0 / h) * -math.expm1(-2.0 * d1 * e1 / h)
    if half_space:
        return -math.expm1(-2.0 * p2 * q2 / h)
    rp = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
    rq = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
    gp = theta0 - math.acos(min(1.0, max(-1.0, p2 / rp)))
    gq = theta0 - math.acos(min(1.0, max(-1.0, q2 / rq)))
    dp = rp if gp >= 0.5 * math.pi else rp * math.sin(gp)
    dq = rq if gq >= 0.5 * math.pi else rq * math.sin(gq)
    return -math.expm1(-2.0 * dp * dq / h)


@njit(parallel=True, cache=True)
def _direct_kernel(seed, count, dim, theta0, half_space, start, steps, tidx, bridge, sums, sqs):
    K = tidx.shape[0]
    nsteps = steps.shape[0]
    nblocks = sums.shape[0]
    for blk in prange(nblocks):
        buf = np.empty(NBUF)
        stop = min(count, (blk + 1) * BLOCK)
        for i in range(blk * BLOCK, stop):
            key = stream_key(seed, i)
            ctr = np.uint64(0)
            pos = NBUF
            p0 = start[0]
            p1 = start[1]
            p2 = start[2]
            w = 1.0
            k = 0
            for n in range(nsteps):
                h = steps[n]
                sh = math.sqrt(h)
                z, ctr, pos = next_normal(key, ctr, buf, pos)
                q0 = p0 + sh * z
                z, ctr, pos = next_normal(key, ctr, buf, pos)
                q1 = p1 + sh * z
                q2 = 0.0
                if dim == 3:
                    z, ctr, pos = next_normal(key, ctr, buf, pos)
                    q2 = p2 + sh * z
                if not _inside(q0, q1, q2, dim, theta0, half_space):
                    break
                if bridge:
                    w *= _bridge_factor(p0, p1, p2, q0, q1, q2, h, dim, theta0, half_space)
                p0 = q0
                p1 = q1
                p2 = q2
                while k < K and tidx[k] == n:
                    sums[blk, k] += w
                    sqs[blk, k] += w * w
                    k += 1
                if k == K:
                    break


def _start_cartesian(spec, x):
    r, ang = x.radius, x.angular
    if spec.dimension == 2:
        return np.array([r * math.cos(ang), r * math.sin(ang), 0.0])
    return np.array([r * math.sin(ang), 0.0, r * math.cos(ang)])


def _summarise(sums, sqs, count):
    s = sums.sum(axis=0)
    q = sqs.sum(axis=0)
    mean = s / count
    var = np.maximum(q / count - mean * mean, 0.0) * count / max(count - 1, 1)
    se = np.sqrt(var / count)
    return mean, se


def direct_bm_exit(spec: ConeSpec, x: StartPoint, t_grid: Sequence[float], dt: float, count: int,
                   seed: int, bridge: bool = True, workers: Optional[int] = None) -> ExitSurvivalEstimate:
    """Survival of standard Brownian motion in the cone, by path simulation.

    Nodes sit on a grid of step ``dt`` refined so that every threshold is a
    node.  A path survives threshold t if every node up to t is inside the
    open cone.  With ``bridge=True`` (default) it also carries the weight
    prod(1 - exp(-2 d_n d_{n+1} / h)) over its steps, d the distance to each
    boundary wall, which removes the O(sqrt(dt)) bias from excursions
    between nodes; the weight is exact for the half-plane, the quadrant and
    the half-space and a flat-wall approximation otherwise.  All thresholds
    use the same paths, so the curve is monotone.

    Returns
    -------
    ExitSurvivalEstimate
        95% intervals are Wilson intervals without bridge weights and normal
        intervals from the weight variance with them.
    """
    x.check(spec)
    t = _check_grid(t_grid)
    dt, count = _check_run(dt, count)
    steps, tidx = _schedule(t, dt)
    nblocks = (count + BLOCK - 1) // BLOCK
    sums = np.zeros((nblocks, t.size))
    sqs = np.zeros((nblocks, t.size))
    half_space = spec.angle == math.pi if spec.dimension == 2 else spec.angle == 0.5 * math.pi
    with worker_threads(workers):
        _direct_kernel(as_seed(seed), count, spec.dimension, float(spec.angle), half_space,
                       _start_cartesian(spec, x), steps, tidx, bool(bridge), sums, sqs)
    mean, se = _summarise(sums, sqs, count)
    if bridge:
        lo, hi = np.clip(mean - Z95 * se, 0, 1), np.clip(mean + Z95 * se, 0, 1)
    else:
        lo, hi = wilson_interval(np.round(mean * count), count)
    diag = {"radius": x.radius, "angular": x.angular, "bridge": bool(bridge), "steps": int(steps.size)}
    return ExitSurvivalEstimate(t, mean, np.minimum(lo, mean), np.maximum(hi, mean), se, "direct",
                                count, int(seed), dt, diag)


# ---------------------------------------------------------------------------
# factorized estimator


@njit(inline="always")
def _series(u, lam, coef):
    s = 0.0
    for j in range(lam.shape[0]):
        s += coef[j] * math.exp(-lam[j] * u)
    return min(1.0, max(0.0, s))


@njit(parallel=True, cache=True)
def _factorized_kernel(seed, count, alpha, kill, dt, drift, sigma, kind, jrate, atoms, cum, decay,
                       targets, lam, coef, u_cap, u_min, sums, sqs, stats):
    # stats[blk]: [evaluations below u_min, clock sum at the last target, paths reaching it]
    K = targets.shape[0]
    nblocks = sums.shape[0]
    sdt = math.sqrt(dt)
    for blk in prange(nblocks):
        buf = np.empty(NBUF)
        stop = min(count, (blk + 1) * BLOCK)
        for i in range(blk * BLOCK, stop):
            key = stream_key(seed, i)
            ctr = np.uint64(0)
            zeta, ctr = exponential(key, ctr, kill)
            tj, ctr = exponential(key, ctr, jrate)
            s = 0.0
            x = 0.0
            ex = 1.0
            acc = 0.0
            pos = NBUF
            k = 0
            while k < K:
                if s >= u_cap:
                    # S(A) <= tolerance for every remaining threshold
                    break
                sh = sdt
                if zeta - s <= dt:
                    h = zeta - s
                    s_new = zeta
                    sh = math.sqrt(h)
                else:
                    h = dt
                    s_new = s + dt
                jumped = False
                if tj <= s_new:
                    h = tj - s
                    s_new = tj
                    sh = math.sqrt(h)
                    jumped = True
                x_new = x + drift * h
                if sigma > 0.0:
                    z, ctr, pos = next_normal(key, ctr, buf, pos)
                    x_new += sigma * sh * z
                ex_new = math.exp(alpha * x_new)
                acc_new = acc + 0.5 * h * (ex + ex_new)
                while k < K and acc_new >= targets[k]:
                    # invert the clock by linear interpolation of I on the step
                    a = s + h * (targets[k] - acc) / (acc_new - acc)
                    v = _series(a, lam, coef)
                    sums[blk, k] += v
                    sqs[blk, k] += v * v
                    if a < u_min:
                        stats[blk, 0] += 1.0
                    if k == K - 1:
                        stats[blk, 1] += a
                        stats[blk, 2] += 1.0
                    k += 1
                if s_new >= zeta:
                    # killed: T_0 reached, zero survival beyond
                    break
                if jumped:
                    y, ctr = jump_size(key, ctr, kind, atoms, cum, decay)
                    x_new += y
                    ex_new = math.exp(alpha * x_new)
                    step, ctr = exponential(key, ctr, jrate)
                    tj += step
                x = x_new
                ex = ex_new
                acc = acc_new
                s = s_new


def _series_window(lam, coef, tol):
    """Clock values beyond which S is negligible, and below which it is under-resolved."""
    total = float(np.sum(np.abs(coef)))
    lam1 = float(lam[0])
    if total <= tol:
        u_cap = 0.0
    elif lam1 <= 0.0:
        u_cap = math.inf
    else:
        u_cap = math.log(total / tol) / lam1
    nz = np.flatnonzero(coef != 0.0)
    last = nz[-1] if nz.size else 0
    if lam[last] <= 0.0:
        u_min = 0.0
    else:
        u_min = max(0.0, math.log(max(abs(coef[last]), tol) / tol) / lam[last])
    return u_cap, u_min


def factorized_exit(spec: ConeSpec, model: LevyModel, alpha: float, x: StartPoint,
                    t_grid: Sequence[float], dt: float, count: int, seed: int,
                    modes: Sequence[SpectralMode], series_tol: float = 1e-9,
                    workers: Optional[int] = None) -> ExitSurvivalEstimate:
    """Conditional Monte Carlo estimate of P_x(tau_C > t) from the skew product.

    Parameters
    ----------
    spec : ConeSpec
        Cone; its diffusion coefficient must be the one used for ``modes``.
    model : LevyModel
        Lamperti exponent xi of the radial part (``brownian_lamperti_model``
        for Brownian motion).
    alpha : float
        Self-similarity index.
    x : StartPoint
    t_grid : increasing thresholds
    dt : float
        Euler step for xi.
    count : int
        Number of xi paths.
    seed : int
    modes : sequence of SpectralMode
        Dirichlet modes of the angular domain, ordered by eigenvalue.
    series_tol : float
        A path stops once sum_j |coef_j| exp(-lambda_1 s) drops below this.

    Notes
    -----
    The result depends on ``x`` only through ``x.angular`` and the products
    |x|^-alpha t, so two inputs with the same products give bitwise equal
    estimates under the same seed.
    """
    x.check(spec)
    t = _check_grid(t_grid)
    dt, count = _check_run(dt, count)
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValidationError("alpha must be positive")
    if not modes:
        raise ValidationError("modes must be non-empty")
    lam, coef = mode_coefficients(modes, x.angular)
    u_cap, u_min = _series_window(lam, coef, series_tol)
    targets = t * x.radius ** (-alpha)
    pp = PathParams(model)
    nblocks = (count + BLOCK - 1) // BLOCK
    sums = np.zeros((nblocks, t.size))
    sqs = np.zeros((nblocks, t.size))
    stats = np.zeros((nblocks, 3))
    with worker_threads(workers):
        _factorized_kernel(as_seed(seed), count, float(alpha), model.kill_rate, dt, pp.drift, pp.sigma,
                           pp.kind, pp.rate, pp.atoms, pp.cum, pp.decay, targets, lam, coef,
                           u_cap, u_min, sums, sqs, stats)
    mean, se = _summarise(sums, sqs, count)
    st = stats.sum(axis=0)
    under = int(st[0])
    mean_clock = st[1] / st[2] if st[2] > 0 else math.nan
    if under:
        warnings.warn(f"{under} clock values fell below {u_min:.3g}, where {len(modes)} modes do not "
                      "resolve the angular survival; pass more modes", TruncationWarning, stacklevel=2)
    if st[2] > 0 and dt > 1e-2 * mean_clock:
        warnings.warn(f"dt={dt:g} is coarser than 1% of the mean clock {mean_clock:.3g} at the "
                      "largest threshold", MonteCarloWarning, stacklevel=2)
    lo = np.clip(mean - Z95 * se, 0.0, 1.0)
    hi = np.clip(mean + Z95 * se, 0.0, 1.0)
    diag = {"radius": x.radius, "angular": x.angular, "modes": len(modes), "u_cap": u_cap,
            "u_min": u_min, "under_resolved": under, "mean_clock_at_tmax": mean_clock,
            "targets": targets}
    return ExitSurvivalEstimate(t, mean, np.minimum(lo, mean), np.maximum(hi, mean), se,
                                "factorized", count, int(seed), dt, diag)


class SelfSimilarityDiagnostic(NamedTuple):
    z_scores: np.ndarray
    max_z: float
    flagged: bool
    identical: bool


def self_similarity_check(first: ExitSurvivalEstimate, second: ExitSurvivalEstimate,
                          z_limit: float = 4.0) -> SelfSimilarityDiagnostic:
    """Compare estimates at (x, t) and (lambda x, lambda^alpha t), threshold by threshold.

    Flags any pair that differs by more than ``z_limit`` joint standard errors.
    """
    a, b = first.survival, second.survival
    if a.shape != b.shape:
        raise ValidationError("estimates must have the same number of thresholds")
    joint = np.sqrt(first.se**2 + second.se**2)
    diff = np.abs(a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(diff == 0, 0.0, np.where(joint > 0, diff / joint, np.inf))
    max_z = float(np.max(z))
    return SelfSimilarityDiagnostic(z, max_z, max_z > z_limit, bool(np.array_equal(a, b)))
