"""Exact error laws, error constants and large deviations of integrators for the
linear stochastic oscillator ``x'' + x = alpha W'``, plus the general linear
additive-noise case."""

__version__ = "0.1.0"

from .oscillator import (  # noqa: E402
    CATALOG,
    NoSpectralAngle,
    OscillatorModel,
    SchemeError,
    StepScheme,
    build_scheme,
    convergence_condition_check,
    hat_sequences,
    spectral_params,
    trig_sums,
)
from .variance import (  # noqa: E402
    ErrorConstant,
    ErrorLaw,
    VarianceBreakdown,
    compare_methods,
    error_constant,
    error_law,
    error_mean,
    extrapolate_constant,
    rate_function_closed,
    variance_brute,
    variance_nonsymplectic,
    variance_symplectic,
)

__all__ = [
    "CATALOG", "ErrorConstant", "ErrorLaw", "NoSpectralAngle", "OscillatorModel", "SchemeError",
    "StepScheme", "VarianceBreakdown", "build_scheme", "compare_methods", "convergence_condition_check",
    "error_constant", "error_law", "error_mean", "extrapolate_constant", "hat_sequences",
    "rate_function_closed", "spectral_params", "trig_sums", "variance_brute",
    "variance_nonsymplectic", "variance_symplectic",
]
