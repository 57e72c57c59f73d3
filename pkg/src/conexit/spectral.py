"""Dirichlet spectra of the angular generator a*Laplacian on wedges and caps.

All masses and normalisations use sigma, the *normalised* surface measure
on the whole sphere S^{d-1}: d(phi)/(2 pi) on the circle and
sin(theta) d(theta) d(psi)/(4 pi) on S^2.  For d = 2 the angular coordinate
is the polar angle phi in (0, theta0); for d = 3 it is the angle theta from
the cap axis (the azimuth is irrelevant for axisymmetric modes).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import ConvergenceError, TruncationWarning, ValidationError
from .legendre import legendre_p, legendre_p_scalar, scan_sign_changes

__all__ = [
    "ConeSpec",
    "SpectralMode",
    "SeriesSurvival",
    "LemmaDiagnostic",
    "wedge_spectrum",
    "cap_spectrum",
    "spectrum",
    "fd_spectrum_1d",
    "survival_series",
    "sigma_measure",
    "sup_norm",
    "lemma_bounds_check",
    "circle_heat_kernel_diag",
    "sphere_heat_kernel_diag",
    "fit_heat_kernel_constant",
    "default_heat_kernel_constants",
    "absorbed_bm_interval_survival",
    "spectrum_rows",
]


@dataclass(frozen=True)
class ConeSpec:
    dimension: int
    angle: float
    diffusion_coeff: float = 0.5

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValidationError(f"dimension must be 2 or 3, got {self.dimension}")
        top = 2 * math.pi if self.dimension == 2 else math.pi
        if not 0 < self.angle < top:
            raise ValidationError(f"angle must lie in (0, {top:.6g}) for d={self.dimension}, got {self.angle}")
        if not self.diffusion_coeff > 0:
            raise ValidationError(f"diffusion_coeff must be > 0, got {self.diffusion_coeff}")

    def contains(self, angular):
        return 0 < angular < self.angle if self.dimension == 2 else 0 <= angular < self.angle

    def to_dict(self):
        return {"dimension": self.dimension, "angle": self.angle, "diffusion_coeff": self.diffusion_coeff}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(int(d["dimension"]), float(d["angle"]), float(d.get("diffusion_coeff", 0.5)))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed cone: {exc}") from exc


@dataclass(frozen=True)
class SpectralMode:
    """One Dirichlet eigenpair; ``eval`` maps the angular coordinate to m_j."""

    index: int
    eigenvalue: float
    mass: float
    eval: Callable = field(compare=False, repr=False)
    domain: tuple = (0.0, math.pi)
    degree: float = None

    def __call__(self, angular):
        return self.eval(angular)


def sigma_measure(spec: ConeSpec):
    """sigma(D) as a fraction of the whole sphere."""
    if spec.dimension == 2:
        return spec.angle / (2 * math.pi)
    return 0.5 * (1.0 - math.cos(spec.angle))


def _wedge_mode(j, theta0, a):
    k = j * math.pi / theta0
    amp = 2.0 * math.sqrt(math.pi / theta0)
    mass = amp * theta0 * (1 - (-1) ** j) / (2 * math.pi**2 * j)

    def m(phi, amp=amp, k=k):
        return amp * np.sin(k * np.asarray(phi, dtype=float))

    return SpectralMode(index=j, eigenvalue=a * k * k, mass=mass, eval=m, domain=(0.0, theta0))


def wedge_spectrum(spec: ConeSpec, count: int):
    """Closed-form modes a*(j*pi/theta0)^2, 2*sqrt(pi/theta0)*sin(j*pi*phi/theta0)."""
    if spec.dimension != 2:
        raise ValidationError("wedge_spectrum needs a d=2 cone")
    if count < 1:
        raise ValidationError("count must be >= 1")
    return [_wedge_mode(j, spec.angle, spec.diffusion_coeff) for j in range(1, count + 1)]


def _cap_quadrature(theta0, nu):
    n = 2 * int(math.ceil(nu)) + 96
    t, w = roots_legendre(n)
    x0 = math.cos(theta0)
    # map [-1, 1] -> [x0, 1]; d sigma = dx / 2
    x = 0.5 * (1 - x0) * t + 0.5 * (1 + x0)
    return x, 0.5 * (1 - x0) * w * 0.5


def cap_spectrum(spec: ConeSpec, count: int, scan_step: float = 0.125, nu_max: float = None):
    """Axisymmetric Dirichlet modes of a*Laplacian on the polar cap {theta < theta0}.

    Modes with a non-trivial azimuthal dependence integrate to zero over the
    cap and never contribute to exit probabilities, so they are skipped; the
    returned ``index`` counts axisymmetric modes only.  Degrees nu solve
    P_nu(cos theta0) = 0 and the eigenvalue is a*nu*(nu + 1).
    """
    if spec.dimension != 3:
        raise ValidationError("cap_spectrum needs a d=3 cone")
    if count < 1:
        raise ValidationError("count must be >= 1")
    theta0, a = spec.angle, spec.diffusion_coeff
    x0 = math.cos(theta0)
    if nu_max is None:
        nu_max = (count + 2) * math.pi / theta0 + 10.0
    brackets, last = scan_sign_changes(x0, scan_step, count, nu_max)
    if len(brackets) < count:
        raise ConvergenceError(
            f"found {len(brackets)} of {count} zeros of P_nu(cos {theta0}) scanning nu in [0, {last}]")
    modes = []
    for j, (lo, hi) in enumerate(brackets, start=1):
        if lo == hi:
            nu = lo
        else:
            nu = brentq(lambda v: legendre_p_scalar(v, x0), lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        x, w = _cap_quadrature(theta0, nu)
        p = legendre_p(nu, x)
        c = 1.0 / math.sqrt(float(np.dot(w, p * p)))
        mass = c * float(np.dot(w, p))

        def m(theta, nu=nu, c=c):
            th = np.asarray(theta, dtype=float)
            return c * legendre_p(nu, np.cos(th))

        modes.append(SpectralMode(index=j, eigenvalue=a * nu * (nu + 1.0), mass=mass, eval=m,
                                  domain=(0.0, theta0), degree=nu))
    return modes


def spectrum(spec: ConeSpec, count: int):
    return wedge_spectrum(spec, count) if spec.dimension == 2 else cap_spectrum(spec, count)


def fd_spectrum_1d(theta0: float, a: float, grid_points: int, count: int = 10):
    """Modes of the 3-point Dirichlet discretisation of -a d^2/dphi^2 on (0, theta0).

    ``grid_points`` interior nodes, spacing h = theta0/(grid_points + 1).
    Eigenvectors are sigma-normalised and signed to be positive next to the
    left boundary, matching the sine modes.
    """
    n = int(grid_points)
    if n < 16:
        raise ValidationError("grid_points must be >= 16")
    count = min(count, n)
    h = theta0 / (n + 1)
    diag = np.full(n, 2.0 * a / h**2)
    off = np.full(n - 1, -a / h**2)
    lam, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    grid = np.linspace(0.0, theta0, n + 2)
    modes = []
    for j in range(count):
        v = vec[:, j] * math.sqrt(2 * math.pi / h)
        if v[0] < 0:
            v = -v
        full = np.concatenate(([0.0], v, [0.0]))
        mass = float(v.sum()) * h / (2 * math.pi)

        def m(phi, full=full):
            return np.interp(phi, grid, full)

        modes.append(SpectralMode(index=j + 1, eigenvalue=float(lam[j]), mass=mass, eval=m,
                                  domain=(0.0, theta0)))
    return modes


class SeriesSurvival(NamedTuple):
    value: object       # clamped to [0, 1]
    raw: object         # unclamped partial sum
    last_term: object   # size of the last retained term
    truncated: bool


def mode_coefficients(modes, angular):
    lam = np.array([m.eigenvalue for m in modes], dtype=float)
    coef = np.array([m.mass * float(m.eval(angular)) for m in modes], dtype=float)
    return lam, coef


def survival_series(modes, theta, u, tol=1e-12):
    """Truncated sum_j exp(-lambda_j u) m_j(theta) mass_j, i.e. P_theta(tau_D > u)."""
    if not modes:
        raise ValidationError("modes must be non-empty")
    lam, coef = mode_coefficients(modes, theta)
    ua = np.asarray(u, dtype=float)
    if np.any(ua < 0):
        raise ValidationError("u must be >= 0")
    terms = np.exp(-np.multiply.outer(ua, lam)) * coef
    raw = terms.sum(axis=-1)
    # the last *non-zero* mode measures truncation (odd modes vanish on symmetric wedges)
    nz = np.flatnonzero(coef != 0.0)
    last = np.abs(terms[..., nz[-1]]) if len(nz) else np.zeros_like(ua)
    truncated = bool(np.any(last > tol))
    if truncated:
        warnings.warn(f"survival series truncated with last term {np.max(last):.3g} > {tol:g}",
                      TruncationWarning, stacklevel=2)
    value = np.clip(raw, 0.0, 1.0)
    if ua.ndim == 0:
        return SeriesSurvival(float(value), float(raw), float(last), truncated)
    return SeriesSurvival(value, raw, last, truncated)


def absorbed_bm_interval_survival(x, length, var, n_images=50):
    """P(BM with variance ``var`` per unit time started at x stays in (0, length)).

    Method of images; independent of any eigenfunction expansion.
    """
    from scipy.special import ndtr

    s = math.sqrt(var)
    k = np.arange(-n_images, n_images + 1)
    shift = 2 * k * length
    tot = (ndtr((length - x + shift) / s) - ndtr((-x + shift) / s)
           - ndtr((length + x + shift) / s) + ndtr((x + shift) / s))
    return float(math.fsum(tot))


def sup_norm(mode: SpectralMode, points: int = 20001):
    lo, hi = mode.domain
    grid = np.linspace(lo, hi, points)
    return float(np.max(np.abs(mode.eval(grid))))


def circle_heat_kernel_diag(t, a=0.5, terms=200):
    """q(t, phi, phi) of a*d^2/dphi^2 on S^1 w.r.t. d(phi)/(2 pi); the sup of the kernel."""
    t = float(t)
    n = np.arange(1, terms + 1)
    if a * t < 1.0:
        # Poisson-summed (image) form converges fast for small t
        return math.sqrt(math.pi / (a * t)) * (1.0 + 2.0 * float(np.sum(np.exp(-(math.pi * n) ** 2 / (a * t)))))
    return 1.0 + 2.0 * float(np.sum(np.exp(-a * n * n * t)))


def sphere_heat_kernel_diag(t, a=0.5):
    """q(t, x, x) of a*Laplacian on S^2 w.r.t. normalised sigma."""
    t = float(t)
    lmax = int(math.sqrt(60.0 / (a * t))) + 10
    l = np.arange(0, lmax + 1)
    return float(np.sum((2 * l + 1) * np.exp(-a * l * (l + 1.0) * t)))


def fit_heat_kernel_constant(kernel_diag, beta, t_grid):
    """Smallest C with q(t, ., .) <= C t^-beta on ``t_grid``.

    The diagonal dominates the kernel (q(t,x,y)^2 <= q(t,x,x) q(t,y,y) by the
    semigroup property), so the diagonal is enough.
    """
    return max(t**beta * kernel_diag(t) for t in t_grid)


def default_heat_kernel_constants(spec: ConeSpec, t_max=None, points=400):
    """(C, beta) for Brownian motion on S^1 (beta=1/2) or S^2 (beta=1).

    The unkilled kernel tends to 1 as t grows, so no C works for every t; the
    fit runs over (1e-4, t_max] with t_max = 1/lambda_1 by default, the
    largest time at which the eigenvalue bounds invoke the kernel bound.
    """
    a = spec.diffusion_coeff
    if t_max is None:
        t_max = 1.0 / spectrum(spec, 1)[0].eigenvalue
    grid = np.geomspace(1e-4, t_max, points)
    if spec.dimension == 2:
        beta = 0.5
        return fit_heat_kernel_constant(lambda t: circle_heat_kernel_diag(t, a), beta, grid), beta
    beta = 1.0
    return fit_heat_kernel_constant(lambda t: sphere_heat_kernel_diag(t, a), beta, grid), beta


@dataclass
class LemmaDiagnostic:
    index: int
    eigenvalue: float
    lower_bound: float
    lower_ok: bool
    lower_bound_with_e: float
    lower_ok_with_e: bool
    sup_norm: float
    sup_bound: float
    sup_ok: bool

    @property
    def ok(self):
        return self.lower_ok and self.sup_ok


def lemma_bounds_check(modes, C, beta, sigmaD, points=20001):
    """Check the eigenvalue lower bound and eigenfunction sup bound per mode.

    ``lower_bound`` is [C sigma(D)]^(-1/beta) j^(1/beta).  Setting
    t = 1/lambda_j in j exp(-lambda_j t) <= C sigma(D) t^-beta actually gives
    j <= e C sigma(D) lambda_j^beta, so ``lower_bound_with_e`` carries the
    extra factor e^(-1/beta); both are reported.  The sup bound is
    ||m_j||_inf <= e C sigma(D)^(1/2) lambda_j^beta, with the sup norm
    estimated on a grid of ``points`` nodes.
    """
    out = []
    for m in modes:
        j = m.index
        lb = (C * sigmaD) ** (-1.0 / beta) * j ** (1.0 / beta)
        lbe = (math.e * C * sigmaD) ** (-1.0 / beta) * j ** (1.0 / beta)
        sn = sup_norm(m, points)
        ub = math.e * C * math.sqrt(sigmaD) * m.eigenvalue**beta
        out.append(LemmaDiagnostic(j, m.eigenvalue, lb, m.eigenvalue >= lb, lbe, m.eigenvalue >= lbe,
                                   sn, ub, sn <= ub))
    return out


def spectrum_rows(modes, points=20001):
    """Rows (j, lambda, mass, sup_norm_est) for CSV export."""
    return [(m.index, m.eigenvalue, m.mass, sup_norm(m, points)) for m in modes]
