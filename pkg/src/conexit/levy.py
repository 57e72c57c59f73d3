"""Lamperti Lévy process models and their Laplace exponent.

The Laplace exponent is

    phi(theta) = -q + b*theta + sigma2*theta**2/2
                 + int (exp(theta*y) - 1 - theta*y*1{|y| < 1}) Pi(dy)

with the small-jump compensator taken on the *open* unit interval.  The
external exponential killing rate ``lam`` never enters ``phi``; it is always
passed explicitly (``solve_kappa`` solves ``phi(alpha*kappa) = lam``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import ConvergenceError, DomainError, NoRootError, ValidationError

__all__ = [
    "NoJumps",
    "AtomJumps",
    "ExpJumps",
    "LevyModel",
    "AssumptionReport",
    "laplace_exponent",
    "laplace_exponent_derivative",
    "solve_kappa",
    "validate_assumptions",
    "path_drift",
    "radial_regime",
    "brownian_model",
]


@dataclass(frozen=True)
class NoJumps:
    type: str = field(default="none", init=False)

    def to_dict(self):
        return {"type": "none"}


@dataclass(frozen=True)
class AtomJumps:
    """Compound Poisson jumps: ``rate`` times a finite law on ``atoms``."""

    rate: float
    atoms: tuple
    probs: tuple
    type: str = field(default="atoms", init=False)

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        if not self.rate >= 0 or not math.isfinite(self.rate):
            raise ValidationError(f"jump rate must be finite and >= 0, got {self.rate}")
        if len(atoms) == 0 or len(atoms) != len(probs):
            raise ValidationError("atoms and probs must be non-empty and of equal length")
        if not all(math.isfinite(a) for a in atoms):
            raise ValidationError("jump atoms must be finite")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValidationError("jump probabilities must be >= 0 and sum to 1 within 1e-12")

    def to_dict(self):
        return {"type": "atoms", "rate": self.rate, "atoms": list(self.atoms),
                "probs": list(self.probs)}


@dataclass(frozen=True)
class ExpJumps:
    """Positive jumps with density ``rate * decay * exp(-decay * y)`` on y > 0."""

    rate: float
    decay: float
    type: str = field(default="exp", init=False)

    def __post_init__(self):
        if not self.rate >= 0 or not math.isfinite(self.rate):
            raise ValidationError(f"jump rate must be finite and >= 0, got {self.rate}")
        if not self.decay > 0 or not math.isfinite(self.decay):
            raise ValidationError(f"decay rate must be finite and > 0, got {self.decay}")

    def to_dict(self):
        return {"type": "exp", "rate": self.rate, "decay": self.decay}


JumpSpec = Union[NoJumps, AtomJumps, ExpJumps]


def _jumps_from_dict(d):
    kind = d.get("type", "none")
    if kind == "none":
        return NoJumps()
    if kind == "atoms":
        return AtomJumps(float(d["rate"]), tuple(d["atoms"]), tuple(d["probs"]))
    if kind == "exp":
        return ExpJumps(float(d["rate"]), float(d["decay"]))
    raise ValidationError(f"unknown jump type {kind!r}")


def _natural_theta_star(jumps):
    if isinstance(jumps, ExpJumps) and jumps.rate > 0:
        return jumps.decay
    return math.inf


@dataclass(frozen=True)
class LevyModel:
    """Characteristic triplet of the Lévy process xi plus its kill rate.

    ``theta_star`` is the right end of the domain of phi on [0, inf).  It is
    derived from ``jumps`` when omitted and validated against it otherwise.
    """

    kill_rate: float = 0.0
    drift: float = 0.0
    gaussian_var: float = 0.0
    jumps: JumpSpec = field(default_factory=NoJumps)
    theta_star: float = None

    def __post_init__(self):
        for name in ("kill_rate", "drift", "gaussian_var"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.kill_rate < 0:
            raise ValidationError(f"kill_rate must be >= 0, got {self.kill_rate}")
        if self.gaussian_var < 0:
            raise ValidationError(f"gaussian_var must be >= 0, got {self.gaussian_var}")
        natural = _natural_theta_star(self.jumps)
        if self.theta_star is None:
            object.__setattr__(self, "theta_star", natural)
        else:
            ts = float(self.theta_star)
            if not (ts == natural or (math.isfinite(ts) and math.isclose(ts, natural, rel_tol=1e-12))):
                raise ValidationError(
                    f"theta_star={ts} inconsistent with the jump specification (expected {natural})")
            object.__setattr__(self, "theta_star", natural)

    @property
    def sigma(self):
        return math.sqrt(self.gaussian_var)

    @property
    def is_brownian(self):
        """True for xi = sigma*B + b*t with sigma > 0 (no jumps, no killing)."""
        return (self.gaussian_var > 0 and self.kill_rate == 0
                and (isinstance(self.jumps, NoJumps) or self.jumps.rate == 0))

    def to_dict(self):
        ts = self.theta_star
        return {"q": self.kill_rate, "b": self.drift, "sigma2": self.gaussian_var,
                "jumps": self.jumps.to_dict(), "theta_star": None if math.isinf(ts) else ts}

    @classmethod
    def from_dict(cls, d):
        try:
            ts = d.get("theta_star")
            return cls(kill_rate=float(d.get("q", 0.0)), drift=float(d.get("b", 0.0)),
                       gaussian_var=float(d.get("sigma2", 0.0)),
                       jumps=_jumps_from_dict(d.get("jumps", {"type": "none"})),
                       theta_star=None if ts is None else float(ts))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed Lévy model: {exc}") from exc


def brownian_model(sigma=1.0, b=0.0):
    """xi_t = sigma*B_t + b*t."""
    return LevyModel(drift=b, gaussian_var=sigma * sigma)


@dataclass
class AssumptionReport:
    non_arithmetic: bool
    theta_star_ok: bool
    kappa_exists: bool
    messages: list = field(default_factory=list)

    @property
    def ok(self):
        return self.non_arithmetic and self.theta_star_ok and self.kappa_exists


def _small_jump_mean(jumps):
    """rate * E[Y; |Y| < 1], the compensator coefficient."""
    if isinstance(jumps, AtomJumps):
        return jumps.rate * math.fsum(p * a for a, p in zip(jumps.atoms, jumps.probs) if abs(a) < 1)
    if isinstance(jumps, ExpJumps):
        rho = jumps.decay
        return jumps.rate * (1.0 - math.exp(-rho) * (1.0 + rho)) / rho
    return 0.0


def _check_domain(model, theta):
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0) or np.any(th >= model.theta_star) or np.any(np.isnan(th)):
        raise DomainError(f"theta={theta} outside [0, {model.theta_star})")
    return th


def laplace_exponent(model: LevyModel, theta):
    """phi(theta) for 0 <= theta < theta_star (scalar or array)."""
    th = _check_domain(model, theta)
    out = -model.kill_rate + model.drift * th + 0.5 * model.gaussian_var * th * th
    jumps = model.jumps
    if isinstance(jumps, AtomJumps) and jumps.rate > 0:
        acc = np.zeros_like(th)
        for a, p in zip(jumps.atoms, jumps.probs):
            small = a if abs(a) < 1 else 0.0
            acc = acc + p * (np.expm1(th * a) - th * small)
        out = out + jumps.rate * acc
    elif isinstance(jumps, ExpJumps) and jumps.rate > 0:
        rho = jumps.decay
        out = out + jumps.rate * (th / (rho - th)) - th * _small_jump_mean(jumps)
    return out if out.ndim else float(out)


def laplace_exponent_derivative(model: LevyModel, theta):
    th = _check_domain(model, theta)
    out = model.drift + model.gaussian_var * th
    jumps = model.jumps
    if isinstance(jumps, AtomJumps) and jumps.rate > 0:
        acc = np.zeros_like(th)
        for a, p in zip(jumps.atoms, jumps.probs):
            small = a if abs(a) < 1 else 0.0
            acc = acc + p * (a * np.exp(th * a) - small)
        out = out + jumps.rate * acc
    elif isinstance(jumps, ExpJumps) and jumps.rate > 0:
        rho = jumps.decay
        out = out + jumps.rate * rho / (rho - th) ** 2 - _small_jump_mean(jumps)
    return out if out.ndim else float(out)


def path_drift(model: LevyModel):
    """Drift of the continuous part of the paths, b minus the compensator."""
    return model.drift - _small_jump_mean(model.jumps)


def _phi_unbounded(model):
    if math.isfinite(model.theta_star):
        # only exponential jumps give a finite theta_star; phi blows up there
        return True
    if model.gaussian_var > 0:
        return True
    jumps = model.jumps
    if isinstance(jumps, AtomJumps) and jumps.rate > 0 and any(
            a > 0 and p > 0 for a, p in zip(jumps.atoms, jumps.probs)):
        return True
    return path_drift(model) > 0


def solve_kappa(model: LevyModel, alpha: float, lam: float, rtol: float = 1e-12):
    """Unique kappa in (0, theta_star/alpha) with phi(alpha*kappa) = lam.

    phi is convex with phi(0) = -q <= 0 < lam, so the root is bracketed by
    expanding to the right and then polished by Newton steps safeguarded by
    bisection.  Started from the right end of the bracket, Newton iterates
    on a convex increasing function decrease monotonically to the root.
    """
    if not alpha > 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    if not lam > 0:
        raise ValidationError(f"lambda must be > 0, got {lam}")
    kmax = model.theta_star / alpha
    tol = rtol * max(1.0, lam)

    def f(k):
        return laplace_exponent(model, alpha * k) - lam

    lo, hi = 0.0, None
    if math.isinf(kmax):
        k = 1.0
        while k < 1e300:
            if f(k) >= 0:
                hi = k
                break
            lo, k = k, 2.0 * k
    else:
        for i in range(1, 200):
            k = kmax * (1.0 - 2.0 ** -i)
            if k >= kmax:
                break
            if f(k) >= 0:
                hi = k
                break
            lo = k
    if hi is None:
        raise NoRootError(
            f"phi(theta) < {lam} on the whole domain [0, {model.theta_star}): "
            "Assumption 3 fails (no finite kappa)", assumption=3)

    x = hi
    fx = f(x)
    for _ in range(500):
        if abs(fx) <= tol:
            # one more Newton step lands within an ulp or two of the root
            d = alpha * laplace_exponent_derivative(model, alpha * x)
            if fx == 0 or not d > 0:
                return x
            xn = x - fx / d
            return xn if abs(f(xn)) <= abs(fx) else x
        if fx > 0:
            hi = x
        else:
            lo = x
        d = alpha * laplace_exponent_derivative(model, alpha * x)
        xn = x - fx / d if d > 0 else -1.0
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if xn == x or hi - lo <= 4 * np.finfo(float).eps * hi:
            # bracket exhausted at machine precision
            return x if abs(fx) <= abs(f(xn)) else xn
        x, fx = xn, f(xn)
    raise ConvergenceError(f"solve_kappa did not converge (bracket [{lo}, {hi}])")


def _on_common_lattice(atoms, max_den=1000, tol=1e-9):
    nz = [a for a in atoms if a != 0.0]
    if len(nz) <= 1:
        return True
    ref = nz[0]
    for a in nz[1:]:
        r = a / ref
        fr = Fraction(r).limit_denominator(max_den)
        if abs(float(fr) - r) > tol * max(1.0, abs(r)):
            return False
    return True


def validate_assumptions(model: LevyModel, alpha: float, beta: float) -> AssumptionReport:
    """Check Assumptions 2 and 3 for ``xi`` at index ``alpha`` and heat-kernel exponent ``beta``.

    Non-arithmetic: a Gaussian part, a non-zero path drift or an absolutely
    continuous jump law all rule out lattice support; otherwise the process
    is a compound Poisson process and is arithmetic exactly when its atoms
    are commensurable.
    """
    msgs = []
    jumps = model.jumps
    if model.gaussian_var > 0 or isinstance(jumps, ExpJumps) and jumps.rate > 0:
        non_arith = True
    elif path_drift(model) != 0:
        non_arith = True
    elif isinstance(jumps, AtomJumps) and jumps.rate > 0:
        non_arith = not _on_common_lattice([a for a, p in zip(jumps.atoms, jumps.probs) if p > 0])
    else:
        non_arith = False
    if not non_arith:
        msgs.append("Assumption 2 fails: xi is arithmetic (lattice-valued or degenerate)")

    need = alpha * max(1.0, 2.0 * beta)
    ts_ok = model.theta_star > need
    if not ts_ok:
        msgs.append(f"Assumption 3 fails: theta_star={model.theta_star} <= alpha*(1 v 2beta)={need}")
    unbounded = _phi_unbounded(model)
    if not unbounded:
        msgs.append("Assumption 3 fails: phi stays bounded as theta -> theta_star")
    return AssumptionReport(non_arithmetic=non_arith, theta_star_ok=ts_ok,
                            kappa_exists=ts_ok and unbounded, messages=msgs)


def radial_regime(model: LevyModel):
    """Heuristic classification of T0 (hitting time of 0 by the radial part).

    Returns "killed" when q > 0, otherwise "never" or "continuously" from the
    sign of E[xi_1] (zero mean oscillates, so 0 is never reached).
    """
    if model.kill_rate > 0:
        return "killed"
    jumps = model.jumps
    mean = path_drift(model)
    if isinstance(jumps, AtomJumps):
        mean += jumps.rate * math.fsum(a * p for a, p in zip(jumps.atoms, jumps.probs))
    elif isinstance(jumps, ExpJumps):
        mean += jumps.rate / jumps.decay
    return "continuously" if mean < 0 else "never"
