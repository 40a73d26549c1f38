"""Linear stochastic oscillator and the catalogue of one-step schemes.

The test equation is ``x'' + x = alpha * W'`` written as the first-order system

    d(X, Y) = ((0, 1), (-1, 0)) (X, Y) dt + alpha (0, 1) dW,

and every scheme considered here advances the pair by

    (x_{n+1}, y_{n+1}) = A (x_n, y_n) + alpha * b * dW_n

with a constant 2x2 matrix ``A`` and vector ``b``.  When ``A`` has complex
eigenvalues its powers are expressed through a spectral angle ``xi`` and the
two "hat" sequences, which is what every closed-form formula downstream uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._numerics import cos_multiple, expm1_complex, loglog_slope, reduce_multiple, sin_multiple

#: |det(A) - 1| below this marks a scheme as symplectic.
SYMPLECTIC_TOL = 1e-12
#: Relative tolerance on N*h == T for callers that specify h explicitly.
HORIZON_TOL = 1e-9
#: Denominators of the geometric trig sums below this use direct summation.
TRIG_SUM_TOL = 1e-9


class SchemeError(ValueError):
    """A scheme could not be built or lacks a property a computation needs."""


class NoSpectralAngle(SchemeError):
    """The propagation matrix has real eigenvalues (tr(A)^2 >= 4 det(A))."""


@dataclass(frozen=True)
class OscillatorModel:
    """Parameters of the test equation and the horizon of interest."""

    alpha: float = 1.0
    x0: float = 1.0
    y0: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class StepScheme:
    """A one-step map ``u -> A u + alpha b dW`` on a uniform grid of ``N`` steps."""

    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float
    h: float
    N: int
    family: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.h > 0:
            raise SchemeError(f"step size must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise SchemeError(f"step count must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def b(self) -> np.ndarray:
        return np.array([self.b1, self.b2])

    @property
    def T(self) -> float:
        return self.N * self.h

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def gamma(self) -> float:
        """``a12 b2 - a22 b1``, the weight of the second-to-last hat term."""
        return self.a12 * self.b2 - self.a22 * self.b1

    @property
    def is_symplectic(self) -> bool:
        return abs(self.det - 1.0) <= SYMPLECTIC_TOL

    def with_grid(self, T: float, N: int) -> "StepScheme":
        """The same family and parameters rebuilt on another grid."""
        if self.family == "custom":
            raise SchemeError("a custom scheme has no rule for other step sizes")
        return build_scheme(self.family, self.params, T=T, N=N)


# ---------------------------------------------------------------------------
# scheme catalogue


def _beta(h, beta):
    s = 1.0 + beta * (1.0 - beta) * h * h
    a = np.array([[1 - (1 - beta) ** 2 * h * h, h], [-h, 1 - beta**2 * h * h]]) / s
    return a, np.array([(1 - beta) * h, 1.0]) / s


def _theta(h, theta):
    s = 1.0 + theta * theta * h * h
    diag = 1 - (1 - theta) * theta * h * h
    return np.array([[diag, h], [-h, diag]]) / s, np.array([theta * h, 1.0]) / s


def _rotation(h):
    c, s = math.cos(h), math.sin(h)
    return np.array([[c, s], [-s, c]])


def _exponential(h):
    return _rotation(h), np.array([0.0, 1.0])


def _integral(h):
    return _rotation(h), np.array([math.sin(h), math.cos(h)])


def _optimal(h):
    return _rotation(h), np.array([2 * math.sin(h / 2) ** 2, math.sin(h)]) / h


def _half_h(h):
    return _rotation(h), np.array([h / 2, 1.0])


def _pc_em_bem(h):
    return np.array([[1 - h * h, h], [-h, 1 - h * h]]), np.array([h, 1.0])


@dataclass(frozen=True)
class FamilyInfo:
    name: str
    builder: Callable[..., tuple]
    param_names: tuple = ()
    param_ranges: str = ""
    symplectic: bool = True
    formula_id: str = ""
    description: str = ""


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise SchemeError(f"beta must lie in [0, 1], got {beta}")


def _check_theta(theta):
    if not 0.0 <= theta <= 1.0:
        raise SchemeError(f"theta must lie in [0, 1], got {theta}")
    if theta == 0.5:
        raise SchemeError(
            "theta = 1/2 is the midpoint rule; build it as the symplectic beta method"
        )


CATALOG: dict[str, FamilyInfo] = {
    "beta": FamilyInfo(
        "beta", _beta, ("beta",), "beta in [0, 1]", True, "beta_case1|beta_case2",
        "symplectic beta method (beta = 1/2 is the midpoint rule)",
    ),
    "theta": FamilyInfo(
        "theta", _theta, ("theta",), "theta in [0, 1/2) U (1/2, 1]", False, "theta",
        "stochastic theta-method (theta = 0 is Euler-Maruyama)",
    ),
    "exponential": FamilyInfo(
        "exponential", _exponential, (), "", True, "xi_eq_h", "exponential method",
    ),
    "integral": FamilyInfo(
        "integral", _integral, (), "", True, "xi_eq_h", "integral method",
    ),
    "optimal": FamilyInfo(
        "optimal", _optimal, (), "", True, "xi_eq_h", "optimal method",
    ),
    "half_h": FamilyInfo(
        "half_h", _half_h, (), "", True, "xi_eq_h",
        "rotation with b = (h/2, 1); minimal constant among xi = h methods",
    ),
    "pc_em_bem": FamilyInfo(
        "pc_em_bem", _pc_em_bem, (), "", False, "pc_em_bem",
        "predictor-corrector, Euler-Maruyama predictor / backward Euler corrector",
    ),
}

_VALIDATORS = {"beta": _check_beta, "theta": _check_theta}

_CUSTOM_KEYS = ("a11", "a12", "a21", "a22", "b1", "b2")


def _grid(T, N, h):
    if N is None or int(N) != N or N < 1:
        raise SchemeError(f"N must be a positive integer, got {N}")
    N = int(N)
    if T is None and h is None:
        raise SchemeError("give the horizon T (preferred) or the step size h")
    if T is None:
        return float(h), N
    if not T > 0:
        raise SchemeError(f"T must be positive, got {T}")
    if h is not None and abs(N * h - T) > HORIZON_TOL * T:
        raise SchemeError(f"N*h = {N * h!r} does not match T = {T!r}")
    return T / N, N


def build_scheme(
    family: str,
    params: Mapping[str, float] | None = None,
    *,
    N: int,
    T: float | None = None,
    h: float | None = None,
) -> StepScheme:
    """Coefficients of a catalogue scheme on the grid ``h = T / N``.

    ``params`` carries ``beta`` or ``theta`` for those families and the six
    entries ``a11 .. b2`` for ``family="custom"``.
    """
    params = dict(params or {})
    h, N = _grid(T, N, h)
    if family == "custom":
        missing = [k for k in _CUSTOM_KEYS if k not in params]
        if missing:
            raise SchemeError(f"custom scheme is missing {missing}")
        coeffs = {k: float(params[k]) for k in _CUSTOM_KEYS}
        return StepScheme(**coeffs, h=h, N=N, family="custom", params=params)
    try:
        info = CATALOG[family]
    except KeyError:
        raise SchemeError(
            f"unknown scheme family {family!r}; known: {sorted(CATALOG) + ['custom']}"
        ) from None
    extra = set(params) - set(info.param_names)
    if extra:
        raise SchemeError(f"{family} takes no parameters {sorted(extra)}")
    args = []
    for name in info.param_names:
        if name not in params:
            raise SchemeError(f"{family} needs parameter {name!r}")
        value = float(params[name])
        _VALIDATORS[family](value)
        args.append(value)
    A, b = info.builder(h, *args)
    return StepScheme(
        a11=float(A[0, 0]), a12=float(A[0, 1]), a21=float(A[1, 0]), a22=float(A[1, 1]),
        b1=float(b[0]), b2=float(b[1]), h=h, N=N, family=family,
        params={k: float(params[k]) for k in info.param_names},
    )


# ---------------------------------------------------------------------------
# spectral quantities


@dataclass(frozen=True)
class SpectralParams:
    xi: float
    detA: float
    trA: float
    sqrt_det: float
    sin_xi: float
    cos_xi: float


def spectral_params(scheme: StepScheme) -> SpectralParams:
    """Spectral angle of ``A``: ``cos xi = tr / (2 sqrt(det))``, ``xi`` in (0, pi).

    The discriminant is formed as ``-4 a12 a21 - (a11 - a22)^2`` rather than
    ``4 det - tr^2`` so that ``sin xi`` keeps full relative accuracy for small
    steps, and ``xi`` comes from ``atan2``.
    """
    det, tr = scheme.det, scheme.trace
    disc = -4.0 * scheme.a12 * scheme.a21 - (scheme.a11 - scheme.a22) ** 2
    if not det > 0 or not disc > 0:
        raise NoSpectralAngle(
            f"A has real eigenvalues (tr^2 - 4 det = {-disc:.3e}); no spectral angle"
        )
    sqrt_det = math.sqrt(det)
    sin_xi = math.sqrt(disc) / (2 * sqrt_det)
    cos_xi = tr / (2 * sqrt_det)
    xi = math.atan2(sin_xi, cos_xi)
    return SpectralParams(xi, det, tr, sqrt_det, sin_xi, cos_xi)


@dataclass(frozen=True)
class RecurrenceCache:
    """``alpha_hat[k]`` and ``beta_hat[k]`` for ``k = -1 .. k_max``."""

    hat_alpha: np.ndarray
    hat_beta: np.ndarray
    k_max: int

    def alpha(self, k):
        return self.hat_alpha[np.asarray(k) + 1]

    def beta(self, k):
        return self.hat_beta[np.asarray(k) + 1]


def _det_power(det, e):
    # det**e with det == 1 kept exact
    return np.ones_like(e) if det == 1.0 else np.exp(e * math.log(det))


def hat_sequences(spectral: SpectralParams, k_max: int, *, det: float | None = None) -> RecurrenceCache:
    """Closed-form hat sequences

    ``alpha_hat_k = det^(k/2) sin((k+1) xi) / sin xi`` and
    ``beta_hat_k = -det^((k+1)/2) sin(k xi) / sin xi``,

    so that ``A^n = alpha_hat_{n-1} A + beta_hat_{n-1} I``.  ``det`` overrides
    the determinant (pass 1.0 for a symplectic scheme to drop rounding noise).
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    det = spectral.detA if det is None else det
    k = np.arange(-1, k_max + 1, dtype=float)
    s = spectral.sin_xi
    ha = _det_power(det, k / 2) * sin_multiple(k + 1, spectral.xi) / s
    hb = -_det_power(det, (k + 1) / 2) * sin_multiple(k, spectral.xi) / s
    ha[0] = 0.0
    ha[1] = 1.0
    hb[1] = 0.0
    return RecurrenceCache(ha, hb, int(k_max))


# ---------------------------------------------------------------------------
# geometric trigonometric sums


@dataclass(frozen=True)
class TrigSums:
    sin_sum: float
    cos_sum: float
    direct: bool


def _direct_trig_sums(n, xi, a):
    k = np.arange(1, n + 1, dtype=float)
    w = a**k
    return math.fsum(w * sin_multiple(k, xi)), math.fsum(w * cos_multiple(k, xi))


def trig_sums(n: int, xi: float, a: float) -> TrigSums:
    """``sum_{k=1}^n a^k sin(k xi)`` and ``sum_{k=1}^n a^k cos(k xi)``.

    Both come from the geometric series ``z (1 - z^n) / (1 - z)`` with
    ``z = a e^{i xi}``, whose real and imaginary parts are the rational forms

        [a sin xi - a^{n+1} sin((n+1) xi) + a^{n+2} sin(n xi)] / (1 - 2a cos xi + a^2)
        [a cos xi - a^2 - a^{n+1} cos((n+1) xi) + a^{n+2} cos(n xi)] / (1 - 2a cos xi + a^2).

    ``1 - z`` and ``1 - z^n`` are evaluated through ``expm1`` so the ratio keeps
    its relative accuracy when ``a ~ 1`` and ``xi ~ 0``.  For ``a == 1`` the
    half-angle product forms are used.  When the denominator falls below
    ``TRIG_SUM_TOL`` the sum is accumulated term by term instead.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not 0.0 < xi < 2 * math.pi:
        raise ValueError(f"xi must lie in (0, 2 pi), got {xi}")
    n = int(n)
    if a == 0.0:
        return TrigSums(0.0, 0.0, False)
    if a == 1.0:
        half = math.sin(xi / 2)
        common = float(sin_multiple(n / 2, xi)) / half
        return TrigSums(
            common * float(sin_multiple((n + 1) / 2, xi)),
            common * float(cos_multiple((n + 1) / 2, xi)),
            False,
        )
    denom = 1.0 - 2.0 * a * math.cos(xi) + a * a
    if denom < TRIG_SUM_TOL:
        s, c = _direct_trig_sums(n, xi, a)
        return TrigSums(s, c, True)
    log_a = math.log(abs(a))
    phase = xi if a > 0 else xi + math.pi
    # z - 1 and z^n - 1
    d_re, d_im = expm1_complex(log_a, phase)
    u_re, u_im = expm1_complex(n * log_a, float(reduce_multiple(n, phase)))
    # ratio (z^n - 1) / (z - 1)
    den = d_re * d_re + d_im * d_im
    r_re = (u_re * d_re + u_im * d_im) / den
    r_im = (u_im * d_re - u_re * d_im) / den
    z_re, z_im = a * math.cos(xi), a * math.sin(xi)
    return TrigSums(z_re * r_im + z_im * r_re, z_re * r_re - z_im * r_im, False)


def trig_sin_sum(n: int, xi: float, a: float) -> float:
    return trig_sums(n, xi, a).sin_sum


def trig_cos_sum(n: int, xi: float, a: float) -> float:
    return trig_sums(n, xi, a).cos_sum


# ---------------------------------------------------------------------------
# consistency with Euler-Maruyama


@dataclass(frozen=True)
class ConvergenceReport:
    h_grid: np.ndarray
    matrix_residuals: np.ndarray
    noise_residuals: np.ndarray
    matrix_slope: float
    noise_slope: float
    passed: bool


def _slope_or_inf(h, r):
    if np.all(r <= 1e-300):
        return math.inf
    mask = r > 1e-300
    return loglog_slope(h[mask], r[mask])


def convergence_condition_check(
    family: str,
    params: Mapping[str, float] | None = None,
    h_grid=None,
) -> ConvergenceReport:
    """Fit how fast the scheme's coefficients approach Euler-Maruyama's.

    Residuals are ``|a11-1| + |a22-1| + |a12-h| + |a21+h|`` (needs slope >= 2)
    and ``|b1| + |b2-1|`` (needs slope >= 1), with 0.1 slack on each slope.
    """
    h = np.asarray(h_grid if h_grid is not None else 2.0 ** -np.arange(3, 13), dtype=float)
    rm, rn = [], []
    for hk in h:
        s = build_scheme(family, params, h=float(hk), N=1)
        rm.append(abs(s.a11 - 1) + abs(s.a22 - 1) + abs(s.a12 - hk) + abs(s.a21 + hk))
        rn.append(abs(s.b1) + abs(s.b2 - 1))
    rm, rn = np.array(rm), np.array(rn)
    sm, sn = _slope_or_inf(h, rm), _slope_or_inf(h, rn)
    return ConvergenceReport(h, rm, rn, sm, sn, bool(sm >= 1.9 and sn >= 0.9))
