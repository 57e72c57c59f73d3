"""Exit-time tails P_x(tau_C > t) ~ h(x) t^-kappa_1 for self-similar Markov processes in cones."""

from .asymptotics import AsymptoteReport, bm_closed_form, compare, compute_M, compute_h, series_exit_probability
from .errors import (
    AssumptionError, ConexitError, ConvergenceError, DomainError, MonteCarloWarning, MultiplicityWarning,
    NoRootError, TruncationWarning, ValidationError,
)
from .expfun import sample_exp_functional, tail_estimate, theorem_constant, yor_exact_sampler
from .levy import AtomJumps, ExpJumps, LevyModel, NoJumps, brownian_model, laplace_exponent, solve_kappa
from .simulate import StartPoint, brownian_lamperti_model, direct_bm_exit, factorized_exit
from .spectral import ConeSpec, SpectralMode, cap_spectrum, spectrum, wedge_spectrum

__version__ = "0.1.0"
