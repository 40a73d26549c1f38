"""Exact law of the terminal position error ``e_N = x_N - X_T``.

``e_N`` is Gaussian.  Its mean is deterministic algebra on ``A^N`` and its
variance follows from the Ito isometry as a sum of per-interval integrals; the
closed forms for symplectic (``det A = 1``) and non-symplectic schemes collapse
that sum with geometric trigonometric series.  The per-interval sum
(:func:`variance_brute`) is kept as the reference every closed form is checked
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import mpmath as mp
import numpy as np
from scipy import stats

from ._numerics import cos_multiple, richardson, sin_multiple, x_minus_sin
from .oscillator import (
    CATALOG,
    SYMPLECTIC_TOL,
    NoSpectralAngle,
    OscillatorModel,
    SchemeError,
    StepScheme,
    build_scheme,
    hat_sequences,
    RecurrenceCache,
    spectral_params,
)

#: |xi - h| at or below this uses the xi = h closed form.
XI_EQ_H_TOL = 1e-9
#: Between XI_EQ_H_TOL and this, both symplectic forms are tried against the oracle.
XI_AMBIGUITY_BAND = 1e-6
#: Case-2 beta methods: |beta - (1/2 +- sqrt(6)/6)| at or below this.
BETA_CASE2_TOL = 1e-12

BETA_CASE2_ROOTS = (0.5 - math.sqrt(6) / 6, 0.5 + math.sqrt(6) / 6)


class WrongBranch(SchemeError):
    """A closed form was asked for a scheme of the other symplecticity."""


class NoClosedForm(SchemeError):
    """No closed-form error constant is known; extrapolate numerically."""


@dataclass(frozen=True)
class ErrorLaw:
    """Gaussian law of ``e_N``.

    ``per_interval_var`` holds the Ito-isometry contribution of each step when
    the law came from the per-interval sum; closed forms leave it ``None``.
    """

    mean: float
    variance: float
    per_interval_var: np.ndarray | None = None

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class VarianceBreakdown:
    S1: float
    S2: float
    S3: float
    S4: float
    branch: str
    Z_terms: dict | None = None
    H_terms: dict | None = None
    flags: tuple = ()


@dataclass(frozen=True)
class ErrorConstant:
    K_T: float
    family: str
    formula_id: str
    T: float
    alpha: float
    params: Mapping[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# mean and the reference variance


def _hats(scheme: StepScheme):
    try:
        sp = spectral_params(scheme)
    except NoSpectralAngle:
        return None, _hats_by_recurrence(scheme)
    det = 1.0 if scheme.is_symplectic else sp.detA
    return sp, hat_sequences(sp, scheme.N - 1, det=det)


def _hats_by_recurrence(scheme):
    # real eigenvalues: alpha_hat_{k+1} = tr alpha_hat_k - det alpha_hat_{k-1}
    n, tr, det = scheme.N, scheme.trace, scheme.det
    ha = np.zeros(n + 1)
    ha[1] = 1.0
    for k in range(2, n + 1):
        ha[k] = tr * ha[k - 1] - det * ha[k - 2]
    hb = np.empty_like(ha)
    hb[0] = 1.0  # A^0 = I
    hb[1:] = -det * ha[:-1]
    return RecurrenceCache(ha, hb, n - 1)


def noise_weights(scheme: StepScheme) -> np.ndarray:
    """``c_j = b1 alpha_hat_{N-1-j} + gamma alpha_hat_{N-2-j}`` for ``j = 0..N-1``.

    ``c_j`` is the coefficient of ``alpha * dW_j`` in ``x_N``.
    """
    _, hats = _hats(scheme)
    j = np.arange(scheme.N)
    return scheme.b1 * hats.alpha(scheme.N - 1 - j) + scheme.gamma * hats.alpha(scheme.N - 2 - j)


def error_mean(model: OscillatorModel, scheme: StepScheme) -> float:
    """``(a11 alpha_hat_{N-1} + beta_hat_{N-1} - cos T) x0 + (a12 alpha_hat_{N-1} - sin T) y0``."""
    _check_horizon(model, scheme)
    _, hats = _hats(scheme)
    n = scheme.N - 1
    ah, bh = float(hats.alpha(n)), float(hats.beta(n))
    T = model.T
    return (scheme.a11 * ah + bh - math.cos(T)) * model.x0 + (scheme.a12 * ah - math.sin(T)) * model.y0


def _check_horizon(model, scheme):
    if abs(scheme.T - model.T) > 1e-9 * model.T:
        raise SchemeError(f"scheme covers T = {scheme.T!r} but the model asks for T = {model.T!r}")


def interval_variances(c: np.ndarray, h: float, T: float) -> np.ndarray:
    """``int_{t_j}^{t_{j+1}} (c_j - sin(T - s))^2 ds`` for every step.

    Written around the midpoint ``m`` of ``u = T - s`` so that the O(h^3)
    result is not the difference of O(h) pieces:

        d^2 h + 2 d sin(m) g1 + g2 / 2 + sin(m)^2 (2 g1 - g2),

    with ``d = c - sin m``, ``g1 = h - 2 sin(h/2)``, ``g2 = h - sin h``.
    """
    N = c.size
    j = np.arange(N)
    # midpoint of T - s over step j is T - (j + 1/2) h = (N - j - 1/2) h
    mid = sin_multiple(N - j - 0.5, h)
    d = c - mid
    g1 = 2 * x_minus_sin(h / 2)
    g2 = x_minus_sin(h)
    return d * d * h + 2 * d * mid * g1 + 0.5 * g2 + mid * mid * (2 * g1 - g2)


def variance_brute(model: OscillatorModel, scheme: StepScheme) -> ErrorLaw:
    """Error law by summing the Ito-isometry integral step by step."""
    _check_horizon(model, scheme)
    c = noise_weights(scheme)
    sig2 = model.alpha**2 * interval_variances(c, scheme.h, model.T)
    return ErrorLaw(error_mean(model, scheme), math.fsum(sig2), sig2)


def s_decomposition(model: OscillatorModel, scheme: StepScheme) -> tuple[float, float, float, float]:
    """The four partial sums S1..S4 whose total is ``Var(e_N)``."""
    _, hats = _hats(scheme)
    N, h, T, a2 = scheme.N, scheme.h, model.T, model.alpha**2
    b1, g = scheme.b1, scheme.gamma
    j = np.arange(N)
    p = hats.alpha(N - 1 - j)
    q = hats.alpha(N - 2 - j)
    dcos = cos_multiple(N - j - 1, h) - cos_multiple(N - j, h)  # cos(T - t_{j+1}) - cos(T - t_j)
    s1 = a2 * h * (b1 * b1 * math.fsum(p * p) + g * g * math.fsum(q * q))
    s2 = 2 * a2 * h * b1 * g * math.fsum(p * q)
    s3 = -2 * a2 * b1 * math.fsum(p * dcos)
    s4 = math.fsum([-2 * a2 * g * math.fsum(q * dcos), a2 * T / 2, -a2 * math.sin(2 * T) / 4])
    return s1, s2, s3, s4


# ---------------------------------------------------------------------------
# closed forms
#
# The closed forms subtract O(T / h^2) terms to leave an O(T h^2) variance,
# and near xi = h the symplectic form divides by sin((xi - h)/2).  They are
# therefore evaluated in mpmath at a working precision sized to that
# cancellation, starting from the exact binary values of the scheme entries.


def _working_dps(h, T, delta=None):
    dps = 30 + math.ceil(math.log10(max(T, 1.0)) + 4 * math.log10(max(1.0 / h, 1.0)))
    if delta is not None:
        dps += math.ceil(2 * math.log10(1.0 / max(abs(float(delta)), 1e-300)))
    return min(dps, 800)


def _mp_angle(scheme):
    a11, a12, a21, a22 = (mp.mpf(v) for v in (scheme.a11, scheme.a12, scheme.a21, scheme.a22))
    det = a11 * a22 - a12 * a21
    disc = -4 * a12 * a21 - (a11 - a22) ** 2
    if not det > 0 or not disc > 0:
        raise NoSpectralAngle("A has real eigenvalues; no spectral angle")
    return mp.atan2(mp.sqrt(disc), a11 + a22), det


def _z_terms(x, N):
    """Z1 = sum_{k<N} sin kx, Z2 = 1/2 + sum_{k<N} cos kx, Z3 = sum_{k<=N} sin kx."""
    half = mp.sin(x / 2)
    if half == 0:
        return mp.mpf(0), mp.mpf(N) - mp.mpf(1) / 2, mp.mpf(0)
    sN = mp.sin(N * x / 2)
    z1 = mp.sin((N - 1) * x / 2) * sN / half
    z2 = mp.sin((N - mp.mpf(1) / 2) * x) / (2 * half)
    z3 = mp.sin((N + 1) * x / 2) * sN / half
    return z1, z2, z3


def _var_xi_ne_h(a2, b1, g, T, h, N, xi):
    s = mp.sin(xi)
    t = mp.tan(xi)
    zp = _z_terms(xi + h, N)
    zm = _z_terms(xi - h, N)
    var = (
        a2 * b1**2 * (2 * T + h) / (4 * s**2)
        - a2 * h * b1**2 * mp.sin((2 * N + 1) * xi) / (4 * s**3)
        + a2 * g**2 * (2 * T - h) / (4 * s**2)
        + a2 * b1 / s * (zp[2] + zm[2])
        - a2 * h * g**2 * mp.sin((2 * N - 1) * xi) / (4 * s**3)
        - a2 * b1 * h * g * mp.sin(2 * N * xi) / (2 * s**3)
        + a2 * T / 2
        + a2 * b1 * g * T / (s * t)
        + a2 * g * mp.sin(h) / s * (zp[1] - zm[1])
        - a2 * b1 * (zp[1] + zm[1])
        - a2 * mp.sin(2 * T) / 4
        - (2 * a2 * g * mp.sin(h / 2) ** 2 / s + a2 * b1 / t) * (zp[0] + zm[0])
        - a2 * b1
    )
    z = {"Z1+": zp[0], "Z1-": zm[0], "Z2+": zp[1], "Z2-": zm[1], "Z3+": zp[2], "Z3-": zm[2]}
    return var, {k: float(v) for k, v in z.items()}


def _var_xi_eq_h(a2, b1, g, T, h, N):
    s = mp.sin(h)
    t = mp.tan(h)
    s2T = mp.sin(2 * T)
    s2Tm = mp.sin(2 * T - h)
    half = mp.mpf(1) / 2
    return (
        a2 * b1**2 / (2 * s**2) * (T + h / 2)
        + a2 * g * (s2Tm / (2 * s) - N + half)
        + a2 * g**2 / (2 * s**2) * (T - h / 2)
        - a2 * h * g**2 * s2Tm / (4 * s**3)
        + a2 * b1 * g * T / (s * t)
        - a2 * b1 * h * g * s2T / (2 * s**3)
        - a2 * s2T / 4
        - a2 * b1 * (mp.cos(h) - mp.cos(2 * T - h)) / (2 * t * s)
        - a2 * h * b1**2 * mp.sin(2 * T + h) / (4 * s**3)
        + a2 * T / 2
        + a2 * b1 * (mp.cos(h) - mp.cos(2 * T + h)) / (2 * s**2)
        - a2 * b1 * N
        - a2 * b1 * s2Tm / (2 * s)
        - a2 * g * mp.sin(h / 2) ** 2 * (mp.cos(h) - mp.cos(2 * T - h)) / s**2
        - a2 * b1 / 2
    )


def _mp_inputs(model, scheme):
    h = mp.mpf(scheme.h)
    N = scheme.N
    a2 = mp.mpf(model.alpha) ** 2
    b1 = mp.mpf(scheme.b1)
    g = mp.mpf(scheme.a12) * mp.mpf(scheme.b2) - mp.mpf(scheme.a22) * b1
    return a2, b1, g, N * h, h, N


def variance_symplectic(model: OscillatorModel, scheme: StepScheme) -> tuple[ErrorLaw, VarianceBreakdown]:
    """Closed-form variance for ``det A = 1``.

    The general form is singular at ``xi = h``; for ``|xi - h| <= XI_EQ_H_TOL``
    the dedicated ``xi = h`` expression is used unless the general form,
    which is exact whenever ``xi != h``, disagrees with it (the two case-2
    beta methods have ``xi - h = O(h^5)``, well inside the tolerance but far
    from zero).  For ``XI_EQ_H_TOL < |xi - h| <= XI_AMBIGUITY_BAND`` both are
    evaluated and the one closer to :func:`variance_brute` is kept.
    """
    _check_horizon(model, scheme)
    if not scheme.is_symplectic:
        raise WrongBranch(f"det(A) = {scheme.det!r} != 1; use variance_nonsymplectic")
    N, hf = scheme.N, scheme.h
    with mp.workdps(40):
        xi0, _ = _mp_angle(scheme)
        delta = xi0 - mp.mpf(hf)
    flags = []
    with mp.workdps(_working_dps(hf, model.T, delta if delta != 0 else None)):
        xi, _ = _mp_angle(scheme)
        a2, b1, g, T, h, N = _mp_inputs(model, scheme)
        z = None
        if abs(delta) <= XI_EQ_H_TOL:
            var, branch = _var_xi_eq_h(a2, b1, g, T, h, N), "symplectic_xi_eq_h"
            if xi != h:
                gen, z_gen = _var_xi_ne_h(a2, b1, g, T, h, N, xi)
                if abs(gen - var) > mp.mpf("1e-13") * abs(gen):
                    var, z, branch = gen, z_gen, "symplectic_xi_neq_h"
                    flags.append("xi_near_h_general_form")
        else:
            var, z = _var_xi_ne_h(a2, b1, g, T, h, N, xi)
            branch = "symplectic_xi_neq_h"
            if abs(delta) <= XI_AMBIGUITY_BAND:
                alt = _var_xi_eq_h(a2, b1, g, T, h, N)
                ref = variance_brute(model, scheme).variance
                flags.append("xi_h_ambiguity_band")
                if abs(alt - ref) < abs(var - ref):
                    var, z, branch = alt, None, "symplectic_xi_eq_h"
        var = float(var)
    s = s_decomposition(model, scheme)
    law = ErrorLaw(error_mean(model, scheme), var)
    return law, VarianceBreakdown(*s, branch=branch, Z_terms=z, flags=tuple(flags))


def _geom_sum(n, x, a):
    """``sum_{k=1}^n (a e^{ix})^k`` as an mpc."""
    if n <= 0:
        return mp.mpc(0)
    z = a * mp.expj(x)
    if z == 1:
        return mp.mpc(n)
    return z * (1 - z**n) / (1 - z)


def _geom(d, n):
    """``(1 - d^n) / (1 - d)``."""
    if n <= 0:
        return mp.mpf(0)
    return mp.mpf(n) if d == 1 else (1 - d**n) / (1 - d)


def variance_nonsymplectic(model: OscillatorModel, scheme: StepScheme) -> tuple[ErrorLaw, VarianceBreakdown]:
    """Closed-form variance for ``det A != 1`` through the H-terms.

    Each H-term is a geometric trigonometric sum: H1, H2 and H3 run over
    ``sqrt(det)^k`` at angles ``xi +- h`` (to N-1, N-1 and N terms), H4..H6
    over ``det^k`` at angle ``2 xi``, each divided by its ratio.
    """
    _check_horizon(model, scheme)
    if scheme.is_symplectic:
        raise WrongBranch("det(A) == 1; use variance_nonsymplectic only for det(A) != 1")
    with mp.workdps(_working_dps(scheme.h, model.T) + 10):
        xi, d = _mp_angle(scheme)
        a2, b1, g, T, h, N = _mp_inputs(model, scheme)
        sd = mp.sqrt(d)
        s, t = mp.sin(xi), mp.tan(xi)
        H = {}
        for tag, x in (("+", xi + h), ("-", xi - h)):
            short = _geom_sum(N - 1, x, sd) / sd
            H["H1" + tag] = short.imag
            H["H2" + tag] = short.real
            H["H3" + tag] = (_geom_sum(N, x, sd) / sd).imag
        full = _geom_sum(N, 2 * xi, d) / d
        H["H4"] = full.real
        H["H5"] = (_geom_sum(N - 1, 2 * xi, d) / d).real
        H["H6"] = full.imag
        var = (
            a2 * h * b1**2 * _geom(d, N) / (2 * s**2)
            + a2 * h * g**2 * _geom(d, N - 1) / (2 * s**2)
            - (a2 * b1 * sd / t + 2 * a2 * g * mp.sin(h / 2) ** 2 / s) * (H["H1+"] + H["H1-"])
            - a2 * b1 * sd * (H["H2+"] + H["H2-"])
            + a2 * g * mp.sin(h) / s * (H["H2+"] - H["H2-"])
            + a2 * h * b1 * g * _geom(d, N) / (s * t * sd)
            - 2 * a2 * b1
            - a2 * mp.sin(2 * T) / 4
            - a2 * h * g**2 / (2 * s**2) * H["H5"]
            - a2 * h * b1 * g / (s * sd) * H["H6"]
            + a2 * T / 2
            + a2 * b1 / s * (H["H3+"] + H["H3-"])
            - (a2 * h * b1**2 / (2 * s**2) + a2 * h * b1 * g / (s * t * sd)) * H["H4"]
        )
        var = float(var)
        H = {k: float(v) for k, v in H.items()}
    sdec = s_decomposition(model, scheme)
    law = ErrorLaw(error_mean(model, scheme), var)
    return law, VarianceBreakdown(*sdec, branch="nonsymplectic", H_terms=H)


def error_law(model: OscillatorModel, scheme: StepScheme) -> tuple[ErrorLaw, VarianceBreakdown]:
    """Closed-form law, dispatching on ``det A``."""
    if scheme.is_symplectic:
        return variance_symplectic(model, scheme)
    return variance_nonsymplectic(model, scheme)


# ---------------------------------------------------------------------------
# error constants K_T = lim Var(e_N) / h^2


@dataclass(frozen=True)
class XiEqHExpansion:
    """Taylor coefficients in ``h`` of a symplectic scheme with ``tr A = 2 cos h``.

    ``a22`` is not free: its coefficients follow from the trace condition.
    """

    a11_1: float = 0.0
    a11_2: float = 0.0
    a11_3: float = 0.0
    a12_1: float = 0.0
    a12_2: float = 0.0
    a12_3: float = 0.0
    a21_1: float = 0.0
    a21_2: float = 0.0
    a21_3: float = 0.0
    b1_1: float = 0.0
    b1_2: float = 0.0
    b1_3: float = 0.0
    b1_4: float = 0.0
    b2_1: float = 0.0
    b2_2: float = 0.0
    b2_3: float = 0.0
    b2_4: float = 0.0

    def a22_coefficients(self) -> tuple[float, float, float]:
        """Coefficients of h^2, h^3, h^4 in a22."""
        return -(1 + self.a11_1), -self.a11_2, 1 / 12 - self.a11_3


XI_EQ_H_EXPANSIONS = {
    "exponential": XiEqHExpansion(a11_1=-0.5, a11_3=1 / 24, a12_2=-1 / 6, a21_2=1 / 6),
    "integral": XiEqHExpansion(
        a11_1=-0.5, a11_3=1 / 24, a12_2=-1 / 6, a21_2=1 / 6,
        b1_1=1.0, b1_3=-1 / 6, b2_2=-0.5, b2_4=1 / 24,
    ),
    "optimal": XiEqHExpansion(
        a11_1=-0.5, a11_3=1 / 24, a12_2=-1 / 6, a21_2=1 / 6,
        b1_1=0.5, b1_3=-1 / 24, b2_2=-1 / 6, b2_4=1 / 120,
    ),
    "half_h": XiEqHExpansion(a11_1=-0.5, a11_3=1 / 24, a12_2=-1 / 6, a21_2=1 / 6, b1_1=0.5),
}


def xi_eq_h_constant(expansion: XiEqHExpansion, alpha: float, T: float) -> float:
    """Error constant of a symplectic ``xi = h`` scheme from its leading coefficients."""
    b = expansion.b1_1
    sum_ = expansion.a12_1 + expansion.b2_1
    lin = 1 + 3 * b * (b - 1)
    return alpha**2 * (
        (lin + 3 * sum_**2) / 6 * T
        + (1 - 2 * b) * sum_ / 2 * (math.cos(2 * T) - 1)
        + (lin - 3 * sum_**2) / 12 * math.sin(2 * T)
    )


def xi_eq_h_linear_coefficient(b1_1: float, s: float) -> float:
    """``1 + 3 b (b - 1) + 3 s^2``, six times the T-coefficient of the xi = h constant."""
    return 1 + 3 * b1_1 * (b1_1 - 1) + 3 * s * s


def beta_prefactor(beta: float) -> float:
    """``3 beta^2 - 3 beta + 1``; scales the exponential method's constant."""
    return 3 * beta * beta - 3 * beta + 1


def is_beta_case2(beta: float) -> bool:
    """True at the roots of ``12 beta^2 - 12 beta + 1`` where sin((xi-h)/2) = O(h^5)."""
    return any(abs(beta - r) <= BETA_CASE2_TOL for r in BETA_CASE2_ROOTS)


def theta_constant(theta: float, alpha: float, T: float, *, as_printed: bool = False) -> float:
    """Error constant of the stochastic theta-method.

    The T-linear coefficient is ``((1-theta)^3 + theta^3)/6``; ``as_printed``
    swaps in ``((1-theta)^3 - 5 theta^3)/6``, which disagrees with the
    per-interval variance for every theta > 0 (and is negative at theta = 1).
    """
    q = (2 * theta - 1) ** 2
    cubic = (1 - theta) ** 3 - 5 * theta**3 if as_printed else (1 - theta) ** 3 + theta**3
    s2, c2 = math.sin(2 * T), math.cos(2 * T)
    return alpha**2 * (
        q / 24 * T**3 - s2 * q / 16 * T**2 + (cubic / 6 + q * c2 / 16) * T + (1 / 48 + q / 32) * s2
    )


def pc_em_bem_constant(alpha: float, T: float) -> float:
    s2 = math.sin(2 * T)
    return alpha**2 * (T**3 / 24 - s2 / 16 * T**2 + (math.cos(T) ** 2 / 8 + 5 / 48) * T + 5 * s2 / 96)


def beta_constant(beta: float, alpha: float, T: float, *, as_printed: bool = False) -> tuple[float, str]:
    """Error constant of the symplectic beta method and which case produced it.

    Both cases evaluate to ``(3 beta^2 - 3 beta + 1)(T/6 + sin(2T)/12) alpha^2``;
    ``as_printed`` returns ``7T/36 + sin(2T)/16`` for the two case-2 betas.
    """
    base = T / 6 + math.sin(2 * T) / 12
    if is_beta_case2(beta):
        if as_printed:
            return alpha**2 * (7 * T / 36 + math.sin(2 * T) / 16), "beta_case2"
        return alpha**2 * beta_prefactor(beta) * base, "beta_case2"
    return alpha**2 * beta_prefactor(beta) * base, "beta_case1"


def error_constant(
    family: str,
    params: Mapping[str, float] | None = None,
    alpha: float = 1.0,
    T: float = 1.0,
    *,
    expansion: XiEqHExpansion | None = None,
    as_printed: bool = False,
) -> ErrorConstant:
    """Closed-form ``K_T`` for a catalogue family.

    ``family="xi_eq_h"`` takes an explicit :class:`XiEqHExpansion`.  Families
    without a closed form raise :class:`NoClosedForm`; use
    :func:`extrapolate_constant` for those.
    """
    params = dict(params or {})
    if family == "beta":
        K, fid = beta_constant(float(params["beta"]), alpha, T, as_printed=as_printed)
    elif family == "theta":
        theta = float(params["theta"])
        if theta == 0.5:
            raise SchemeError("theta = 1/2 is the midpoint rule; use family='beta'")
        K, fid = theta_constant(theta, alpha, T, as_printed=as_printed), "theta"
    elif family == "pc_em_bem":
        K, fid = pc_em_bem_constant(alpha, T), "pc_em_bem"
    elif family in XI_EQ_H_EXPANSIONS or family == "xi_eq_h":
        exp_ = expansion if family == "xi_eq_h" else XI_EQ_H_EXPANSIONS[family]
        if exp_ is None:
            raise SchemeError("family 'xi_eq_h' needs an expansion")
        K, fid = xi_eq_h_constant(exp_, alpha, T), "xi_eq_h"
    else:
        raise NoClosedForm(f"no closed-form error constant for {family!r}; use numeric extrapolation")
    return ErrorConstant(K, family, fid, T, alpha, params)


def extrapolate_constant(
    model: OscillatorModel,
    scheme_for_N: Callable[[int], StepScheme],
    N_list: Sequence[int] = (2**12, 2**13, 2**14),
    *,
    family: str = "custom",
) -> tuple[ErrorConstant, dict]:
    """``K_T`` by Richardson extrapolation of ``Var(e_N)/h^2`` over dyadic ``N``.

    Returns the constant and a report with the raw ratios, the fitted O(h)
    coefficient and the observed remainder order.
    """
    N_list = sorted(int(n) for n in N_list)
    ratios, hs = [], []
    for n in N_list:
        sch = scheme_for_N(n)
        ratios.append(variance_brute(model, sch).variance / sch.h**2)
        hs.append(sch.h)
    K, C, order = richardson(ratios, hs)
    report = {"N": N_list, "h": hs, "var_over_h2": ratios, "C": C, "order": order}
    return ErrorConstant(K, family, "numeric_extrapolation", model.T, model.alpha), report


def rate_function_closed(K_T: float, T: float) -> Callable:
    """Large-deviation rate ``x^2 / (2 K_T T^2)``; for ``K_T = 0`` it is 0 at 0 and +inf elsewhere."""
    if K_T < 0 or T <= 0:
        raise ValueError("need K_T >= 0 and T > 0")

    def rate(x):
        x = np.asarray(x, dtype=float)
        if K_T == 0:
            out = np.where(x == 0, 0.0, np.inf)
        else:
            out = x * x / (2 * K_T * T * T)
        return out if out.ndim else float(out)

    return rate


# ---------------------------------------------------------------------------
# symplectic vs non-symplectic


@dataclass(frozen=True)
class ComparisonReport:
    K_s: float
    K_ns: float
    T: float
    epsilon: float
    N: int
    R_eps: float
    ratio_bound: float
    log_ratio_bound: float
    tail_prob_s: float
    tail_prob_ns: float
    log_tail_s: float
    log_tail_ns: float
    log_tail_ratio: float
    centered_inequality_holds: bool
    ratio_bound_holds: bool
    premise_holds: bool


def _log_centered_tail(law: ErrorLaw, r: float) -> float:
    # log P(|e - E e| > r)
    return math.log(2.0) + float(stats.norm.logsf(r / law.std))


def _log_tail(law: ErrorLaw, r: float) -> float:
    # log P(|e| > r)
    up = float(stats.norm.logsf((r - law.mean) / law.std))
    down = float(stats.norm.logcdf((-r - law.mean) / law.std))
    return float(np.logaddexp(up, down))


def compare_methods(
    K_s: float,
    K_ns: float,
    T: float,
    epsilon: float,
    N: int,
    laws: tuple[ErrorLaw, ErrorLaw],
) -> ComparisonReport:
    """Centered tails at ``epsilon/N`` and the tail ratio at ``epsilon`` for exact Gaussian laws.

    ``R_eps = eps^2/(2 T^2) (1/K_s - 1/K_ns)``; the tail ratio is compared with
    ``exp(-N^2 R_eps / 2)`` in log space so underflowing tails still compare.
    """
    if K_s <= 0 or K_ns <= 0:
        raise ValueError("comparison needs positive error constants")
    law_s, law_ns = laws
    R = epsilon**2 / (2 * T * T) * (1 / K_s - 1 / K_ns)
    log_bound = -0.5 * N * N * R
    lc_s = _log_centered_tail(law_s, epsilon / N)
    lc_ns = _log_centered_tail(law_ns, epsilon / N)
    lt_s, lt_ns = _log_tail(law_s, epsilon), _log_tail(law_ns, epsilon)
    return ComparisonReport(
        K_s=K_s, K_ns=K_ns, T=T, epsilon=epsilon, N=N, R_eps=R,
        ratio_bound=math.exp(log_bound), log_ratio_bound=log_bound,
        tail_prob_s=math.exp(lc_s), tail_prob_ns=math.exp(lc_ns),
        log_tail_s=lt_s, log_tail_ns=lt_ns, log_tail_ratio=lt_s - lt_ns,
        centered_inequality_holds=lc_s < lc_ns,
        ratio_bound_holds=lt_s - lt_ns <= log_bound,
        premise_holds=R > 0,
    )


def crossover_horizon(K_s: Callable[[float], float], K_ns: Callable[[float], float], T_grid) -> float:
    """Smallest grid ``T`` from which ``K_s(T) < K_ns(T)`` holds on the rest of the grid."""
    T_grid = np.sort(np.asarray(T_grid, dtype=float))
    ok = np.array([K_s(t) < K_ns(t) for t in T_grid])
    if not ok[-1]:
        return math.inf
    bad = np.nonzero(~ok)[0]
    return float(T_grid[0] if bad.size == 0 else T_grid[bad[-1] + 1])


def catalog_error_constant(scheme: StepScheme, alpha: float = 1.0) -> ErrorConstant:
    """Closed-form constant of the family a catalogue scheme was built from."""
    return error_constant(scheme.family, scheme.params, alpha, scheme.T)


__all__ = [
    "BETA_CASE2_ROOTS", "CATALOG", "ComparisonReport", "ErrorConstant", "ErrorLaw",
    "NoClosedForm", "VarianceBreakdown", "WrongBranch", "XiEqHExpansion",
    "XI_EQ_H_EXPANSIONS", "beta_constant", "beta_prefactor", "build_scheme",
    "catalog_error_constant", "compare_methods", "crossover_horizon", "error_constant",
    "error_law", "error_mean", "extrapolate_constant", "interval_variances",
    "is_beta_case2", "noise_weights", "pc_em_bem_constant",
    "rate_function_closed", "s_decomposition", "theta_constant", "variance_brute",
    "variance_nonsymplectic", "variance_symplectic", "xi_eq_h_constant",
    "xi_eq_h_linear_coefficient",
]
