"""Mean-reverting SABR pricing via an exact semigroup factorization.

The zero-volvol generator splits into a volatility transport part and a
heat-with-drift part whose composition has a closed form: transport along
the mean-reversion flow followed by a Gaussian convolution with a
sigma-dependent time change.  This package provides

* closed-form coefficient functions (flow, accumulated variance, dual
  variance, discriminant) with cancellation-free evaluation,
* exact semigroup actions and a closed-form call price,
* a finite-difference solver for the full generator on a bounded
  volatility strip,
* verification suites (algebraic identities, triple-oracle cross checks,
  energy inequalities, smoothing rates, volvol error scaling),
* a CLI (``lsabr``) with CSV/JSON output and optional figure rendering.
"""

from .coeffs import (discriminant, flow, variance, variance_dual,
                     variance_floor, variance_rate_limit,
                     variance_sigma_derivative)
from .fdsolver import (FDOperator, GardingReport, ThetaScheme, assemble,
                       expm_apply, expm_oracle, garding_check,
                       load_checkpoint, save_checkpoint, step)
from .model import (Field, Grid2D, ModelParams, Payoff, WeightSpec,
                    field_from_csv, field_to_csv, japanese_bracket,
                    payoff_sample, weighted_l2_distance, weighted_l2_norm)
from .semigroups import (QuadratureSpec, TruncationWarning, composite_apply,
                         heat_apply, heat_call_closed_form, kernel_density,
                         price_zero_volvol, transport_apply)
from .verify import (CheckResult, ErrorStudyReport, SmoothProfile,
                     SuiteReport, check_corrected_derivative, check_hadamard,
                     check_smoothing_decay, run_error_study,
                     run_identity_suite, triple_oracle_check)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "Grid2D", "Field", "Payoff", "WeightSpec",
    "japanese_bracket", "weighted_l2_norm", "weighted_l2_distance",
    "payoff_sample", "field_to_csv", "field_from_csv",
    "flow", "variance", "variance_dual", "variance_sigma_derivative",
    "discriminant", "variance_rate_limit", "variance_floor",
    "QuadratureSpec", "TruncationWarning", "heat_apply",
    "heat_call_closed_form", "transport_apply", "composite_apply",
    "kernel_density", "price_zero_volvol",
    "FDOperator", "ThetaScheme", "GardingReport", "assemble", "step",
    "expm_oracle", "expm_apply", "garding_check", "save_checkpoint",
    "load_checkpoint",
    "CheckResult", "SuiteReport", "ErrorStudyReport", "SmoothProfile",
    "run_identity_suite", "check_hadamard", "check_corrected_derivative",
    "run_error_study", "check_smoothing_decay", "triple_oracle_check",
    "__version__",
]
