"""Tail constant h(x) in P_x(tau_C > t) ~ h(x) t^-kappa_1, and checks against it.

With lambda_1 the bottom of the angular Dirichlet spectrum and kappa_1 the
root of phi(alpha kappa_1) = lambda_1,

    h(x) = E[I_{e_lambda_1}(alpha xi)^(kappa_1 - 1)] M(x) |x|^(alpha kappa_1)
           / (alpha phi'(alpha kappa_1)),

where M(x) = sum over the lambda_1 eigenspace of m_j(x/|x|) * int_D m_j dsigma.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import io
from .errors import AssumptionError, MultiplicityWarning, TruncationWarning, ValidationError
from .expfun import ExpFunSampleSet, bm_tail_probability, sample_exp_functional, theorem_constant
from .levy import LevyModel, brownian_model, laplace_exponent, solve_kappa, validate_assumptions
from .rng import as_seed, stream_key
from .simulate import ExitSurvivalEstimate, StartPoint
from .spectral import ConeSpec, default_heat_kernel_constants, sigma_measure, spectrum

__all__ = [
    "AsymptoteReport",
    "Comparison",
    "ComparisonTable",
    "SeriesExitProbability",
    "compute_M",
    "compute_h",
    "bm_closed_form",
    "kappa_sequence",
    "default_kappa0",
    "series_exit_probability",
    "mc_tail_source",
    "compare",
    "save_report",
]


class Comparison(NamedTuple):
    t: float
    survival: float
    ci_low: float
    ci_high: float
    ratio: float
    ratio_low: float
    ratio_high: float


@dataclass
class ComparisonTable:
    rows: list
    delta: float
    converged: bool

    def to_dict(self):
        return {"rows": [r._asdict() for r in self.rows], "delta": self.delta, "converged": self.converged}


@dataclass(frozen=True)
class AsymptoteReport:
    """Everything that enters h(x), plus optional comparison rows."""

    kappa1: float
    phi_prime: float
    moment: float
    moment_ci: tuple
    moment_source: str
    Mx: float
    hx: float
    hx_ci: tuple
    lambda1: float
    alpha: float
    start: StartPoint
    comparisons: tuple = ()

    def __post_init__(self):
        if self.Mx > 0 and not self.hx > 0:
            raise ValidationError("h(x) must be positive when M(x) is")

    def with_comparisons(self, table: ComparisonTable) -> "AsymptoteReport":
        return replace(self, comparisons=tuple(table.rows))

    def to_dict(self):
        return {
            "kappa1": self.kappa1, "phi_prime": self.phi_prime, "moment": self.moment,
            "moment_ci": list(self.moment_ci), "moment_source": self.moment_source, "Mx": self.Mx,
            "hx": self.hx, "hx_ci": list(self.hx_ci), "lambda1": self.lambda1, "alpha": self.alpha,
            "start": self.start.to_dict(), "comparisons": [c._asdict() for c in self.comparisons],
        }


def _group_cut(lam1, mult_tol):
    return mult_tol * max(1.0, abs(lam1))


def compute_M(modes, x: StartPoint, mult_tol: float = 1e-8) -> float:
    """M(x): sum of mass_j * m_j(x/|x|) over the eigenspace of lambda_1.

    An eigenvalue counts as equal to lambda_1 when it lies within
    ``mult_tol * max(1, lambda_1)``.  A MultiplicityWarning flags eigenvalues
    between one and two such widths away, where the grouping is fragile.
    """
    if not modes:
        raise ValidationError("modes must be non-empty")
    if not mult_tol > 0:
        raise ValidationError("mult_tol must be positive")
    lam = np.array([m.eigenvalue for m in modes])
    lam1 = float(lam.min())
    gap = np.abs(lam - lam1)
    cut = _group_cut(lam1, mult_tol)
    if np.any((gap > cut) & (gap <= 2 * cut)):
        warnings.warn(f"eigenvalue within 2*mult_tol of lambda_1={lam1:.12g}; multiplicity grouping is ambiguous",
                      MultiplicityWarning, stacklevel=2)
    if np.all(gap <= cut) and len(modes) > 0:
        warnings.warn("every supplied mode lies in the lambda_1 group; the group may be incomplete",
                      MultiplicityWarning, stacklevel=2)
    return math.fsum(m.mass * float(m.eval(x.angular)) for m, g in zip(modes, gap) if g <= cut)


def _default_beta(spec: ConeSpec):
    # the heat kernel of Brownian motion on S^{d-1} blows up like t^{-(d-1)/2}
    return 0.5 * (spec.dimension - 1)


def _check_assumptions(model, alpha, beta):
    rep = validate_assumptions(model, alpha, beta)
    if not rep.non_arithmetic:
        raise AssumptionError("; ".join(rep.messages), assumption=2)
    if not rep.kappa_exists:
        raise AssumptionError("; ".join(rep.messages), assumption=3)
    return rep


def compute_h(spec: ConeSpec, model: LevyModel, alpha: float, x: StartPoint, moment_source=None,
              modes=None, mult_tol: float = 1e-8, beta: Optional[float] = None) -> AsymptoteReport:
    """Assemble h(x) from kappa_1, phi'(alpha kappa_1), the moment and M(x).

    Parameters
    ----------
    moment_source : None, "closed_form", float or ExpFunSampleSet
        Where E[I^{kappa_1 - 1}] comes from.  ``None`` and ``"closed_form"``
        need a Brownian xi; a sample set must be drawn at lambda_1.
    modes : list of SpectralMode, optional
        Defaults to the first four modes of ``spec``.
    """
    x.check(spec)
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    _check_assumptions(model, alpha, _default_beta(spec) if beta is None else beta)
    modes = spectrum(spec, 4) if modes is None else list(modes)
    lam1 = min(m.eigenvalue for m in modes)
    if isinstance(moment_source, str):
        if moment_source != "closed_form":
            raise ValidationError(f"unknown moment source {moment_source!r}")
        moment_source = None
    if isinstance(moment_source, ExpFunSampleSet):
        if not (math.isclose(moment_source.lam, lam1, rel_tol=1e-9) and moment_source.alpha == alpha):
            raise ValidationError("samples must be drawn at (alpha, lambda_1)")
    const = theorem_constant(model, alpha, lam1, moment_source)
    Mx = compute_M(modes, x, mult_tol)
    scale = Mx * x.radius ** (alpha * const.kappa)
    moment_ci = (const.moment * const.ci_low / const.value, const.moment * const.ci_high / const.value)
    hx_ci = tuple(sorted((const.ci_low * scale, const.ci_high * scale)))
    return AsymptoteReport(kappa1=const.kappa, phi_prime=const.phi_prime, moment=const.moment,
                           moment_ci=moment_ci, moment_source=const.source, Mx=Mx,
                           hx=const.value * scale, hx_ci=hx_ci, lambda1=lam1, alpha=float(alpha), start=x)


def bm_closed_form(d: int, theta0: float, x: StartPoint, modes=None, mult_tol: float = 1e-8):
    """(kappa_1, h(x)) for d-dimensional Brownian motion in the cone of half-angle/opening theta0.

    Uses only lambda_1 and M(x):
    h = Gamma(kappa_1 + d/2) / Gamma(2 kappa_1 + d/2) (|x|^2/2)^kappa_1 M(x),
    kappa_1 = (sqrt(2 lambda_1 + (d/2 - 1)^2) - (d/2 - 1)) / 2.
    """
    spec = ConeSpec(int(d), float(theta0))
    x.check(spec)
    modes = spectrum(spec, 4) if modes is None else list(modes)
    lam1 = min(m.eigenvalue for m in modes)
    nu = d / 2.0 - 1.0
    kappa1 = 0.5 * (math.sqrt(2.0 * lam1 + nu * nu) - nu)
    logc = special.gammaln(kappa1 + d / 2.0) - special.gammaln(2.0 * kappa1 + d / 2.0)
    logc += kappa1 * math.log(0.5 * x.radius**2)
    return kappa1, math.exp(logc) * compute_M(modes, x, mult_tol)


def kappa_sequence(modes, model: LevyModel, alpha: float) -> np.ndarray:
    """kappa_j solving phi(alpha kappa_j) = lambda_j, in mode order."""
    return np.array([solve_kappa(model, alpha, m.eigenvalue) for m in modes])


def default_kappa0(kappa1: float, beta: float, theta_star: float, alpha: float) -> float:
    """A kappa_0 with 1 v kappa_1 v 2 beta < kappa_0 < theta_star / alpha."""
    lo = max(1.0, kappa1, 2.0 * beta)
    hi = theta_star / alpha
    if math.isfinite(hi):
        if not hi > lo:
            raise AssumptionError(f"no kappa_0 in ({lo}, {hi})", assumption=3)
        return 0.5 * (lo + hi)
    return kappa1 + max(1.0, 2.0 * beta) + 1.0


class SeriesExitProbability(NamedTuple):
    value: object           # partial sum over j <= J
    remainder_bound: object  # certified bound on the sum over j > J
    terms: np.ndarray        # per-mode contributions, shape (J, len(t))
    J: int
    kappa0: float
    C: float
    beta: float


def mc_tail_source(model: LevyModel, alpha: float, dt: float, count: int, seed: int) -> Callable:
    """Per-mode tails from path samples; mode j draws under its own derived seed."""
    def tail(j, lam, c):
        s = int(stream_key(as_seed(seed), j))
        samples = sample_exp_functional(model, alpha, lam, dt, count, s)
        v = np.sort(samples.values)
        return 1.0 - np.searchsorted(v, np.asarray(c, dtype=float), side="right") / v.shape[0]
    return tail


def _markov_factor(lam, phi0, k0):
    # E[e^{k0} exp(phi0 e)] for e ~ Exp(lam): lam Gamma(k0+1) / (lam - phi0)^{k0+1}
    return np.exp(np.log(lam) + special.gammaln(k0 + 1.0) - (k0 + 1.0) * np.log(lam - phi0))


def series_exit_probability(spec: ConeSpec, modes, model: LevyModel, alpha: float, x: StartPoint, t,
                            J: Optional[int] = None, tail_source="closed_form", C: Optional[float] = None,
                            beta: Optional[float] = None, kappa0: Optional[float] = None,
                            warn_ratio: float = 0.1) -> SeriesExitProbability:
    """Partial sum of sum_j m_j(x/|x|) mass_j P(I_{e_lambda_j} > |x|^-alpha t) plus a remainder bound.

    Each term beyond J is bounded by
    e C sigma(D) lambda_j^beta |x|^{alpha kappa_0} t^{-kappa_0}
    lambda_j Gamma(kappa_0 + 1) / (lambda_j - phi(alpha kappa_0))^{kappa_0 + 1}
    (Markov, Hoelder and the eigenfunction sup bound).  Supplied modes
    beyond J use their eigenvalues; past the last supplied mode the
    eigenvalue lower bound lambda_j >= (e C sigma(D))^{-1/beta} j^{1/beta}
    turns the tail into an integral.

    Parameters
    ----------
    tail_source : "closed_form" or callable(j, lambda_j, c) -> P(I > c)
    J : int, optional
        Defaults to the number of modes with kappa_j <= kappa_0.  A dropped
        mode with kappa_j <= kappa_0 is bounded by |coefficient| times the
        best Markov bound over exponents in [1, kappa_j) (or by 1), so it
        decays more slowly than t^-kappa_0.
    """
    x.check(spec)
    modes = sorted(modes, key=lambda m: m.eigenvalue)
    if not modes:
        raise ValidationError("modes must be non-empty")
    ta = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ta <= 0):
        raise ValidationError("t must be positive")
    if beta is None or C is None:
        Cd, bd = default_heat_kernel_constants(spec)
        C = Cd if C is None else C
        beta = bd if beta is None else beta
    _check_assumptions(model, alpha, beta)
    lam = np.array([m.eigenvalue for m in modes])
    kappa1 = solve_kappa(model, alpha, lam[0])
    if kappa0 is None:
        kappa0 = default_kappa0(kappa1, beta, model.theta_star, alpha)
    if not max(1.0, kappa1, 2.0 * beta) < kappa0 < model.theta_star / alpha:
        raise ValidationError("kappa0 must satisfy 1 v kappa_1 v 2 beta < kappa0 < theta_star/alpha")
    phi0 = float(laplace_exponent(model, alpha * kappa0))
    n_small = int(np.sum(lam <= phi0))
    if n_small == len(modes):
        raise ValidationError(f"all {len(modes)} modes have kappa_j <= kappa0; supply more modes")
    if J is None:
        J = max(1, n_small)
    if not 1 <= J <= len(modes):
        raise ValidationError(f"J must lie in [1, {len(modes)}]")

    c = x.radius ** (-alpha) * ta
    if tail_source == "closed_form":
        if not model.is_brownian:
            raise ValidationError("closed-form tails need a Brownian model")
        tail = lambda j, lj, cc: bm_tail_probability(alpha, model.sigma, model.drift, lj, cc)
    elif callable(tail_source):
        tail = tail_source
    else:
        raise ValidationError(f"unknown tail source {tail_source!r}")

    terms = np.zeros((J, ta.size))
    for k, m in enumerate(modes[:J]):
        coef = m.mass * float(m.eval(x.angular))
        if coef != 0.0:
            terms[k] = coef * np.asarray(tail(m.index, m.eigenvalue, c), dtype=float)
    value = terms.sum(axis=0)

    sig = sigma_measure(spec)
    amp = math.e * C * sig
    big = J + np.flatnonzero(lam[J:] > phi0)
    per_mode = amp * lam[big] ** beta * _markov_factor(lam[big], phi0, kappa0)
    # eigenvalues past the supplied list: lambda_s >= max(lambda_N, L s^{1/beta}); the summand decreases in s
    L = (math.e * C * sig) ** (-1.0 / beta)
    lamN = lam[-1]
    g = lambda s: float(amp * max(lamN, L * s ** (1.0 / beta)) ** beta
                        * _markov_factor(max(lamN, L * s ** (1.0 / beta)), phi0, kappa0))
    if (kappa0 - beta) * lamN <= (beta + 1.0) * max(0.0, -phi0):
        raise ValidationError("supply more modes: the bound is not yet decreasing at the last eigenvalue")
    N = len(modes)
    s_cross = max(float(N), (lamN / L) ** beta)
    tail_int = g(N) * (s_cross - N) + integrate.quad(g, s_cross, np.inf, limit=200)[0]
    factor = x.radius ** (alpha * kappa0) * ta ** (-kappa0)
    bound = (math.fsum(per_mode) + tail_int) * factor
    for m in modes[J:n_small]:
        bound = bound + _small_mode_bound(m, model, alpha, x, c)

    if np.any(bound > warn_ratio * np.abs(value)):
        warnings.warn(f"remainder bound exceeds {warn_ratio:.0%} of the partial sum", TruncationWarning,
                      stacklevel=2)
    if np.ndim(t) == 0:
        return SeriesExitProbability(float(value[0]), float(bound[0]), terms, J, kappa0, C, beta)
    return SeriesExitProbability(value, bound, terms, J, kappa0, C, beta)


def _small_mode_bound(mode, model, alpha, x, c, grid=33):
    """|coef| * min(1, min over k in [1, kappa_j) of E[I^k] c^-k) for a mode with kappa_j <= kappa_0."""
    coef = abs(mode.mass * float(mode.eval(x.angular)))
    if coef == 0.0:
        return np.zeros_like(c)
    best = np.ones_like(c)
    kj = solve_kappa(model, alpha, mode.eigenvalue)
    if kj > 1.0:
        for k in np.linspace(1.0, kj, grid, endpoint=False):
            phik = float(laplace_exponent(model, alpha * k))
            moment = _markov_factor(mode.eigenvalue, phik, k)
            best = np.minimum(best, moment * c ** (-k))
    return coef * best


def compare(report: AsymptoteReport, estimate: ExitSurvivalEstimate, delta: float = 0.1) -> ComparisonTable:
    """Ratios t^kappa_1 * survival / h(x) with 95% bands.

    ``converged`` is set when the last three ratios all lie in [1 - delta, 1 + delta].
    """
    if not delta > 0:
        raise ValidationError("delta must be positive")
    t = np.asarray(estimate.t_grid, dtype=float)
    w = t**report.kappa1 / report.hx
    rows = [Comparison(float(ti), float(s), float(lo), float(hi), float(wi * s), float(wi * lo), float(wi * hi))
            for ti, s, lo, hi, wi in zip(t, estimate.survival, estimate.ci_low, estimate.ci_high, w)]
    last = [r.ratio for r in rows[-3:]]
    converged = len(last) == 3 and all(abs(r - 1.0) <= delta for r in last)
    return ComparisonTable(rows, float(delta), converged)


def save_report(report: AsymptoteReport, path, fmt: str = "json"):
    """JSON carries every field; CSV carries the comparison rows."""
    if fmt == "json":
        return io.write_json(path, report)
    if fmt == "csv":
        return io.write_csv(path, list(Comparison._fields), report.comparisons)
    raise ValidationError(f"unknown format {fmt!r}")
