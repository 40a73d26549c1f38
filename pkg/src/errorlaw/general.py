"""Error laws for one-step schemes on d-dimensional linear SDEs with additive noise.

For ``du = A(t) u dt + b(t) dW`` and a scheme ``u_{n+1} = At_n u_n + bt_n dW_n``
the error ``e_N = u_N - u(T)`` is Gaussian with

    mean = (At_{N-1} ... At_0 - Phi(T)) u0,
    cov  = sum_k int_{t_k}^{t_{k+1}} D_k(s) D_k(s)^T ds,
    D_k(s) = At_{N-1} ... At_{k+1} bt_k - Phi(T) Phi(s)^{-1} b(s),

where ``Phi`` solves ``Phi' = A Phi``, ``Phi(0) = I``.  ``Phi`` and its inverse
``Psi`` (``Psi' = -Psi A``) are integrated with classical RK4; the covariance
integrals use Gauss-Legendre panels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import loglog_slope, richardson
from .oscillator import OscillatorModel, StepScheme

#: Largest RK4 step used for Phi and Psi.
MAX_RK4_STEP = 2e-3
#: Longest Gauss-Legendre panel inside one scheme step.
MAX_PANEL = 0.25


@dataclass(frozen=True)
class LinearModel:
    """``du = A(t) u dt + b(t) dW`` on ``[0, T]`` with ``u(0) = u0``."""

    A_of_t: Callable[[float], np.ndarray]
    b_of_t: Callable[[float], np.ndarray]
    u0: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "u0", np.asarray(self.u0, dtype=float).reshape(-1))
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        d = self.u0.size
        for t in (0.0, self.T):
            A, b = self.A(t), self.b(t)
            if A.shape != (d, d):
                raise ValueError(f"A(t) has shape {A.shape}, expected {(d, d)}")
            if b.ndim != 2 or b.shape[0] != d:
                raise ValueError(f"b(t) has shape {b.shape}, expected ({d}, d_noise)")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise ValueError(f"non-finite coefficients at t = {t}")

    @property
    def d(self) -> int:
        return self.u0.size

    @property
    def d_noise(self) -> int:
        return self.b(0.0).shape[1]

    def A(self, t: float) -> np.ndarray:
        return np.asarray(self.A_of_t(t), dtype=float)

    def b(self, t: float) -> np.ndarray:
        b = np.asarray(self.b_of_t(t), dtype=float)
        return b.reshape(-1, 1) if b.ndim == 1 else b

    @classmethod
    def constant(cls, A, b, u0, T) -> "LinearModel":
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        return cls(lambda t: A, lambda t: b, u0, T)

    @classmethod
    def from_table(cls, times, A_values, b_values, u0, T) -> "LinearModel":
        """Coefficients sampled at ``times``, interpolated with cubic splines.

        The interpolant is an approximation layer: error laws computed from it
        are exact for the spline model, not for the underlying data.
        """
        times = np.asarray(times, dtype=float)
        if times[0] > 0 or times[-1] < T:
            raise ValueError("table must cover [0, T]")
        sA = CubicSpline(times, np.asarray(A_values, dtype=float), axis=0)
        sb = CubicSpline(times, np.asarray(b_values, dtype=float), axis=0)
        return cls(lambda t: sA(t), lambda t: sb(t), u0, T)


def oscillator_linear_model(model: OscillatorModel) -> LinearModel:
    """The stochastic oscillator ``d(X, Y) = ((0, 1), (-1, 0)) (X, Y) dt + alpha (0, 1) dW``."""
    return LinearModel.constant([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [model.alpha]], [model.x0, model.y0], model.T)


# ---------------------------------------------------------------------------
# fundamental matrix


def _rk4_march(f, Y0, times, max_step):
    """Integrate ``Y' = f(t, Y)`` from ``times[0]``, returning ``Y`` at every entry of ``times``.

    Between consecutive times the interval is split into equal RK4 steps no
    longer than ``max_step``.
    """
    out = np.empty((len(times),) + Y0.shape)
    out[0] = Y = Y0
    for i in range(1, len(times)):
        t0, t1 = times[i - 1], times[i]
        n = max(1, math.ceil((t1 - t0) / max_step - 1e-12))
        dt = (t1 - t0) / n
        t = t0
        for _ in range(n):
            k1 = f(t, Y)
            k2 = f(t + dt / 2, Y + dt / 2 * k1)
            k3 = f(t + dt / 2, Y + dt / 2 * k2)
            k4 = f(t + dt, Y + dt * k3)
            Y = Y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        out[i] = Y
    return out


@dataclass(frozen=True)
class FundamentalMatrix:
    grid: np.ndarray
    Phi: np.ndarray
    Phi_inv: np.ndarray
    model: LinearModel
    max_step: float
    flags: tuple = ()

    def inverse_at(self, k: int, s: np.ndarray) -> np.ndarray:
        """``Phi(s)^{-1}`` for sorted ``s`` in ``[grid[k], grid[k+1]]``, marched from ``grid[k]``."""
        times = np.concatenate([[self.grid[k]], np.asarray(s, dtype=float)])
        A = self.model.A
        return _rk4_march(lambda t, P: -P @ A(t), self.Phi_inv[k], times, self.max_step)[1:]

    def identity_defect(self) -> float:
        """``max_t ||Psi(t) Phi(t) - I||_F`` over the grid."""
        eye = np.eye(self.Phi.shape[1])
        return float(max(np.linalg.norm(P @ F - eye) for P, F in zip(self.Phi_inv, self.Phi)))


def fundamental_matrix(model: LinearModel, N: int, *, max_step: float = MAX_RK4_STEP) -> FundamentalMatrix:
    """``Phi`` and ``Phi^{-1}`` on the scheme grid ``t_n = n T / N``.

    Each scheme step is refined into RK4 sub-steps of at most ``max_step``;
    the inverse is co-propagated through ``Psi' = -Psi A`` rather than
    obtained by inversion.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    grid = model.T * np.arange(N + 1) / N
    eye = np.eye(model.d)
    A = model.A
    Phi = _rk4_march(lambda t, F: A(t) @ F, eye, grid, max_step)
    Psi = _rk4_march(lambda t, P: -P @ A(t), eye, grid, max_step)
    flags = () if np.all(np.isfinite(Phi)) and np.all(np.isfinite(Psi)) else ("non_finite_propagator",)
    return FundamentalMatrix(grid, Phi, Psi, model, max_step, flags)


# ---------------------------------------------------------------------------
# schemes


@dataclass(frozen=True)
class GeneralScheme:
    """Per-step coefficients ``A_tilde[n]`` (d x d) and ``b_tilde[n]`` (d x d_noise)."""

    A_tilde: np.ndarray
    b_tilde: np.ndarray
    h: float
    N: int

    def __post_init__(self):
        At = np.asarray(self.A_tilde, dtype=float)
        bt = np.asarray(self.b_tilde, dtype=float)
        if At.ndim == 2:
            At = np.broadcast_to(At, (self.N,) + At.shape).copy()
        if bt.ndim == 2:
            bt = np.broadcast_to(bt, (self.N,) + bt.shape).copy()
        if At.shape[0] != self.N or bt.shape[0] != self.N:
            raise ValueError("need one coefficient pair per step")
        object.__setattr__(self, "A_tilde", At)
        object.__setattr__(self, "b_tilde", bt)

    @property
    def T(self) -> float:
        return self.N * self.h


def _check_grid(model, h, N):
    if abs(N * h - model.T) > 1e-9 * model.T:
        raise ValueError(f"N h = {N * h!r} does not match T = {model.T!r}")


def euler_maruyama_scheme(model: LinearModel, h: float, N: int) -> GeneralScheme:
    """``A_tilde_n = I + A(t_n) h``, ``b_tilde_n = b(t_n)``."""
    _check_grid(model, h, N)
    eye = np.eye(model.d)
    At = np.array([eye + model.A(n * h) * h for n in range(N)])
    bt = np.array([model.b(n * h) for n in range(N)])
    return GeneralScheme(At, bt, h, N)


def embed_oscillator_scheme(scheme: StepScheme, alpha: float) -> GeneralScheme:
    """A 2x2 oscillator scheme as a GeneralScheme; the noise column is ``alpha (b1, b2)``."""
    return GeneralScheme(scheme.A, alpha * scheme.b.reshape(2, 1), scheme.h, scheme.N)


def exact_propagator_scheme(fund: FundamentalMatrix, b_tilde=None) -> GeneralScheme:
    """``A_tilde_n = Phi(t_{n+1}) Phi(t_n)^{-1}``; ``b_tilde`` defaults to zero."""
    N = fund.grid.size - 1
    h = fund.grid[1] - fund.grid[0]
    At = np.array([fund.Phi[n + 1] @ fund.Phi_inv[n] for n in range(N)])
    if b_tilde is None:
        b_tilde = np.zeros((N, fund.model.d, fund.model.d_noise))
    return GeneralScheme(At, b_tilde, h, N)


@dataclass(frozen=True)
class ConditionCheck:
    h: np.ndarray
    matrix_residuals: np.ndarray
    noise_residuals: np.ndarray
    matrix_slope: float
    noise_slope: float
    passed: bool


def _slope(h, r):
    mask = r > 1e-300
    if mask.sum() < 2:
        return math.inf
    return loglog_slope(h[mask], r[mask])


def euler_maruyama_condition_check(
    model: LinearModel, scheme_for_N: Callable[[int], GeneralScheme], N_list: Sequence[int]
) -> ConditionCheck:
    """Fit ``max_n ||A_tilde_n - A_EM_n||_F = O(h^2)`` and ``max_n ||b_tilde_n - b_EM_n||_F = O(h)``.

    Passing (slopes >= 1.9 and >= 0.9) is sufficient for the ``K_T h^2``
    variance expansion, not necessary.
    """
    hs, rm, rn = [], [], []
    for N in sorted(N_list):
        s = scheme_for_N(N)
        em = euler_maruyama_scheme(model, s.h, s.N)
        hs.append(s.h)
        rm.append(np.linalg.norm(s.A_tilde - em.A_tilde, axis=(1, 2)).max())
        rn.append(np.linalg.norm(s.b_tilde - em.b_tilde, axis=(1, 2)).max())
    h, rm, rn = np.array(hs), np.array(rm), np.array(rn)
    sm, sn = _slope(h, rm), _slope(h, rn)
    return ConditionCheck(h, rm, rn, sm, sn, bool(sm >= 1.9 and sn >= 0.9))


# ---------------------------------------------------------------------------
# error law


@dataclass(frozen=True)
class VectorErrorLaw:
    mean: np.ndarray
    cov: np.ndarray
    H_T: np.ndarray | None = None
    quad_change: float | None = None
    flags: tuple = ()
    report: dict = field(default_factory=dict)

    @property
    def K_T(self) -> np.ndarray | None:
        return None if self.H_T is None else np.diag(self.H_T).copy()


def _cov_sum(model, scheme, fund, tails, q):
    x, w = np.polynomial.legendre.leggauss(q)
    PhiT = fund.Phi[-1]
    d = model.d
    cov = np.zeros((d, d))
    for k in range(scheme.N):
        t0, t1 = fund.grid[k], fund.grid[k + 1]
        panels = max(1, math.ceil((t1 - t0) / MAX_PANEL - 1e-12))
        edges = np.linspace(t0, t1, panels + 1)
        half = np.diff(edges) / 2
        s = ((edges[:-1] + half)[:, None] + half[:, None] * x[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        Psi = fund.inverse_at(k, s)
        head = tails[k] @ scheme.b_tilde[k]
        for si, wi, P in zip(s, ws, Psi):
            D = head - PhiT @ P @ model.b(si)
            cov += wi * (D @ D.T)
    return 0.5 * (cov + cov.T)


def error_law_general(
    model: LinearModel,
    scheme: GeneralScheme,
    fund: FundamentalMatrix | None = None,
    quad_nodes: int = 4,
    *,
    check_quadrature: bool = True,
    quad_tol: float = 1e-8,
) -> VectorErrorLaw:
    """Exact Gaussian law of ``e_N = u_N - u(T)``.

    With ``check_quadrature`` the covariance is recomputed with twice the
    nodes; the largest entry change relative to ``trace(cov)`` is reported and
    flagged when above ``quad_tol``.
    """
    if quad_nodes < 2:
        raise ValueError("quad_nodes must be >= 2")
    _check_grid(model, scheme.h, scheme.N)
    fund = fund if fund is not None else fundamental_matrix(model, scheme.N)
    if fund.grid.size != scheme.N + 1:
        raise ValueError("fundamental matrix grid does not match the scheme")
    d = model.d
    # tails[k] = A_tilde[N-1] ... A_tilde[k+1]
    tails = np.empty((scheme.N, d, d))
    acc = np.eye(d)
    for k in range(scheme.N - 1, -1, -1):
        tails[k] = acc
        acc = acc @ scheme.A_tilde[k]
    mean = (acc - fund.Phi[-1]) @ model.u0
    cov = _cov_sum(model, scheme, fund, tails, quad_nodes)
    flags = list(fund.flags)
    change = None
    if check_quadrature:
        cov2 = _cov_sum(model, scheme, fund, tails, 2 * quad_nodes)
        scale = max(abs(np.trace(cov2)), 1e-300)
        change = float(np.abs(cov2 - cov).max() / scale)
        if change > quad_tol:
            flags.append("quadrature_not_converged")
    return VectorErrorLaw(mean, cov, quad_change=change, flags=tuple(flags))


def extrapolate_error_constants(
    model: LinearModel,
    scheme_for_N: Callable[[int], GeneralScheme],
    N_list: Sequence[int] = (64, 128, 256),
    *,
    quad_nodes: int = 4,
) -> VectorErrorLaw:
    """``H_T = lim Cov(e_N) / h^2`` by entrywise three-point Richardson extrapolation.

    The fitted O(h) coefficient and the observed order of the remainder
    (expect about 1) are put in ``report``.  The returned ``mean``/``cov``
    belong to the finest N.
    """
    N_list = sorted(int(n) for n in N_list)
    if len(N_list) < 3:
        raise ValueError("need at least three N values")
    ratios, hs, laws = [], [], []
    for N in N_list:
        s = scheme_for_N(N)
        law = error_law_general(model, s, quad_nodes=quad_nodes, check_quadrature=False)
        laws.append(law)
        ratios.append(law.cov / s.h**2)
        hs.append(s.h)
    ratios = np.array(ratios)
    d = model.d
    H = np.empty((d, d))
    C = np.empty((d, d))
    orders = np.empty((d, d))
    flags = []
    for i in range(d):
        for j in range(d):
            H[i, j], C[i, j], orders[i, j] = richardson(ratios[:, i, j], hs)
    diag_orders = np.diag(orders)
    if np.any(np.isnan(diag_orders)):
        flags.append("non_monotone_sequence")
    H = 0.5 * (H + H.T)
    report = {"N": N_list, "h": hs, "cov_over_h2": ratios, "C": C, "order": orders}
    return VectorErrorLaw(laws[-1].mean, laws[-1].cov, H_T=H, flags=tuple(flags), report=report)


# ---------------------------------------------------------------------------
# large deviations


@dataclass(frozen=True)
class LdpQuantities:
    component_rates: list
    matrix_rate: Callable | None
    flags: tuple = ()


def _component_rate(K, T):
    def rate(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x == 0, 0.0, np.inf) if K <= 0 else x * x / (2 * K * T * T)
        return out if out.ndim else float(out)

    return rate


def ldp_quantities(H_T: np.ndarray, T: float, *, rcond: float = 1e-12) -> LdpQuantities:
    """Per-component rates ``x^2 / (2 K_i T^2)`` and ``x^T H_T^{-1} x / (2 T^2)`` when ``H_T`` is invertible."""
    H = np.asarray(H_T, dtype=float)
    comps = [_component_rate(float(k), T) for k in np.diag(H)]
    w = np.linalg.eigvalsh(H)
    if w.min() <= rcond * max(w.max(), 0.0) or w.max() <= 0:
        return LdpQuantities(comps, None, ("singular_H_T",))
    Hinv = np.linalg.inv(H)

    def matrix_rate(x):
        x = np.asarray(x, dtype=float)
        return float(x @ Hinv @ x) / (2 * T * T)

    return LdpQuantities(comps, matrix_rate)


# ---------------------------------------------------------------------------
# strong law illustration


@dataclass(frozen=True)
class SllnReport:
    N: list
    q50: np.ndarray
    q99: np.ndarray
    tail_max_q99: np.ndarray
    rms_bound: np.ndarray


def slln_demo(
    model: LinearModel,
    scheme_for_N: Callable[[int], GeneralScheme],
    N_list: Sequence[int],
    M: int,
    seed: int,
    *,
    component: int = 0,
) -> SllnReport:
    """Quantiles of ``|e_N|`` (one component) as ``N`` grows, from exact-law draws.

    Draws for different ``N`` reuse the same standard normals (a coupling of
    the marginals, not of actual trajectories).  ``tail_max_q99[i]`` is the
    99th percentile of ``max_{N >= N_list[i]} |e_N|`` over the sample.
    ``rms_bound`` is ``sqrt(2 Var + 2 mean^2)``, the bound on the root mean
    square error.
    """
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    z = np.random.Generator(np.random.Philox(key=seed)).standard_normal(M)
    abs_e = []
    bound = []
    for N in N_list:
        law = error_law_general(model, scheme_for_N(N), check_quadrature=False)
        m, v = law.mean[component], max(law.cov[component, component], 0.0)
        abs_e.append(np.abs(m + math.sqrt(v) * z))
        bound.append(math.sqrt(2 * v + 2 * m * m))
    abs_e = np.array(abs_e)
    tail_max = np.maximum.accumulate(abs_e[::-1], axis=0)[::-1]
    return SllnReport(
        N_list,
        np.quantile(abs_e, 0.5, axis=1),
        np.quantile(abs_e, 0.99, axis=1),
        np.quantile(tail_max, 0.99, axis=1),
        np.array(bound),
    )
