"""Monte-Carlo checks built on exact Gaussian sampling of ``e_N``.

``e_N = m_N + alpha sum_j int_{t_j}^{t_{j+1}} (c_j - sin(T - s)) dW_s`` is a sum of
independent centred Gaussians, one per step, with the per-interval variances
of :func:`errorlaw.variance.interval_variances`.  A draw is therefore
``m_N + sum_j sigma_j Z_j`` with independent standard normals ``Z_j``.

Random numbers come from Philox streams: chunk ``k`` of a run with seed ``s``
uses ``Philox(key=s).jumped(k)``, so a run is reproducible bit for bit for a
given ``(seed, chunk)`` whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .oscillator import OscillatorModel, StepScheme, build_scheme
from .variance import NoClosedForm, error_constant, error_law, variance_brute

# Column block size (in normals) used while drawing one chunk.
_BLOCK_ELEMS = 1 << 21


@dataclass(frozen=True)
class MCConfig:
    M: int
    seed: int
    chunk: int = 4096
    workers: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def chunk_generator(seed: int, index: int) -> np.random.Generator:
    """Independent generator for chunk ``index`` of a seeded run."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(index))


def _chunk_bounds(M, chunk):
    return [(k, lo, min(lo + chunk, M)) for k, lo in enumerate(range(0, M, chunk))]


def _run_chunks(config: MCConfig, fn) -> np.ndarray:
    """Apply ``fn(generator, rows)`` to each chunk and concatenate in chunk order."""
    bounds = _chunk_bounds(config.M, config.chunk)

    def job(b):
        k, lo, hi = b
        return fn(chunk_generator(config.seed, k), hi - lo)

    if config.workers == 1 or len(bounds) == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(job, bounds))
    return np.concatenate(parts)


@dataclass(frozen=True)
class ErrorSampler:
    """Exact sampler of ``e_N``: ``mean + sum_j sigmas[j] Z_j``."""

    mean: float
    sigmas: np.ndarray
    total_sigma: float

    def _draw(self, gen: np.random.Generator, rows: int) -> np.ndarray:
        n = self.sigmas.size
        cols = max(1, _BLOCK_ELEMS // max(rows, 1))
        acc = np.zeros(rows)
        for lo in range(0, n, cols):
            sig = self.sigmas[lo : lo + cols]
            acc += gen.standard_normal((rows, sig.size)) @ sig
        return self.mean + acc

    def sample(self, config: MCConfig) -> np.ndarray:
        """``config.M`` independent draws of ``e_N``."""
        return _run_chunks(config, self._draw)


def build_error_sampler(model: OscillatorModel, scheme: StepScheme) -> ErrorSampler:
    law = variance_brute(model, scheme)
    sig2 = np.maximum(law.per_interval_var, 0.0)
    return ErrorSampler(law.mean, np.sqrt(sig2), math.sqrt(law.variance))


# ---------------------------------------------------------------------------
# growth of Var(e_N)/h^2 in T


@dataclass(frozen=True)
class ScanRow:
    T: float
    N: int
    h: float
    var_over_h2: float
    se: float
    ci_low: float
    ci_high: float
    exact_var_over_h2: float
    K_T: float | None


def mc_variance_scan(
    model: OscillatorModel,
    family: str,
    T_list: Sequence[float],
    N: int,
    M: int,
    seed: int,
    *,
    params: dict | None = None,
    n_boot: int = 999,
    workers: int = 1,
) -> list[ScanRow]:
    """Empirical ``Var(e_N)/h^2`` per horizon with percentile-bootstrap CIs.

    Each horizon uses its own seed stream (``seed + i``); the bootstrap
    resampling draws from a far-away jump of the same stream.  The exact value at
    the same ``N`` and, where a closed form exists, ``K_T`` are carried along.
    """
    rows = []
    for i, T in enumerate(T_list):
        stream = (seed + i) % 2**64
        m = OscillatorModel(alpha=model.alpha, x0=model.x0, y0=model.y0, T=float(T))
        sch = build_scheme(family, params, N=N, T=float(T))
        s = build_error_sampler(m, sch).sample(MCConfig(M, stream, workers=workers))
        h2 = sch.h**2
        boot = stats.bootstrap(
            (s,), lambda x, axis: np.var(x, axis=axis, ddof=1), n_resamples=n_boot,
            method="percentile", random_state=np.random.Generator(np.random.Philox(key=stream).jumped(1 << 40)),
        )
        try:
            K = error_constant(family, params, m.alpha, float(T)).K_T
        except NoClosedForm:
            K = None
        rows.append(
            ScanRow(
                T=float(T), N=N, h=sch.h, var_over_h2=float(np.var(s, ddof=1)) / h2,
                se=float(boot.standard_error) / h2,
                ci_low=float(boot.confidence_interval.low) / h2,
                ci_high=float(boot.confidence_interval.high) / h2,
                exact_var_over_h2=error_law(m, sch)[0].variance / h2, K_T=K,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# central limit theorem


class DegenerateLimit(ValueError):
    """K_T = 0: the scaled error converges to a point mass."""


@dataclass(frozen=True)
class CltReport:
    M: int
    ks_statistic: float
    ks_pvalue: float
    critical_value: float
    passed: bool
    moment_gaps: tuple[float, float]


def ks_critical_value(M: int) -> float:
    """Asymptotic 1% Kolmogorov-Smirnov critical value ``1.63 / sqrt(M)``."""
    return 1.63 / math.sqrt(M)


def clt_check(model: OscillatorModel, scheme: StepScheme, K_T: float, config: MCConfig) -> CltReport:
    """KS distance of ``(N e_N - E[N e_N]) / (T sqrt(K_T))`` to the standard normal."""
    if K_T <= 0:
        raise DegenerateLimit("K_T = 0: the limit law is a point mass; no KS check")
    if config.M < 100:
        raise ValueError("clt_check needs M >= 100 for the asymptotic KS critical value")
    sampler = build_error_sampler(model, scheme)
    e = sampler.sample(config)
    N, T = scheme.N, model.T
    z = N * (e - sampler.mean) / (T * math.sqrt(K_T))
    ks = stats.kstest(z, "norm")
    m2, m4 = float(np.mean(z**2)), float(np.mean(z**4))
    crit = ks_critical_value(config.M)
    return CltReport(config.M, float(ks.statistic), float(ks.pvalue), crit, ks.statistic < crit, (abs(m2 - 1), abs(m4 / 3 - 1)))


# ---------------------------------------------------------------------------
# empirical rate function


def default_lambda_grid() -> np.ndarray:
    """``lambda_j = -2 + 0.0001 (j - 1)``, ``j = 1..40001``."""
    return -2.0 + 1e-4 * np.arange(40001)


@dataclass(frozen=True)
class RateEstimate:
    lambdas: np.ndarray
    Lambda_vals: np.ndarray
    y: np.ndarray
    I: np.ndarray
    ess: np.ndarray
    negative_curvature_count: int
    flags: tuple = ()
    normalization: float = 2.0

    @property
    def pairs(self) -> np.ndarray:
        """``(y(lambda), I(y(lambda)))`` as an (n, 2) array."""
        return np.column_stack([self.y, self.I])


def rate_from_samples(
    samples: np.ndarray,
    N0: int,
    lambdas: np.ndarray,
    *,
    normalization: float = 2.0,
    block: int = 512,
    convexity_tol: float = 1e-9,
) -> RateEstimate:
    """Empirical log-MGF ``Lambda(l) = N0^-p log(mean exp(l N0^2 e))`` and its Legendre pairs.

    ``p = normalization`` (2 by default, 1 for the alternative scaling).
    ``y`` comes from ``np.gradient`` (central inside, one-sided at the ends)
    and ``I = l y - Lambda``.  ``ess`` is the effective sample size of the
    tilted weights ``exp(l N0^2 e)``, which marks where the estimate is still
    carried by more than a handful of samples.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    d = np.diff(lambdas)
    if lambdas.size < 3 or not np.allclose(d, d[0], rtol=1e-6, atol=0):
        raise ValueError("lambda grid must be uniform with at least 3 points")
    e = np.asarray(samples, dtype=float)
    M = e.size
    scale = float(N0) ** 2
    log_m = math.log(M)
    Lam = np.empty(lambdas.size)
    ess = np.empty(lambdas.size)
    for lo in range(0, lambdas.size, block):
        lam = lambdas[lo : lo + block, None]
        z = lam * scale * e[None, :]
        l1 = logsumexp(z, axis=1)
        l2 = logsumexp(2 * z, axis=1)
        Lam[lo : lo + block] = l1 - log_m
        ess[lo : lo + block] = np.exp(2 * l1 - l2)
    flags = []
    finite = np.isfinite(Lam)
    if not finite.all():
        flags.append("lambda_grid_truncated")
        keep = np.nonzero(finite)[0]
        lambdas, Lam, ess = lambdas[keep[0] : keep[-1] + 1], Lam[keep[0] : keep[-1] + 1], ess[keep[0] : keep[-1] + 1]
    Lam = Lam / float(N0) ** normalization
    y = np.gradient(Lam, lambdas)
    I = lambdas * y - Lam
    neg = int(np.sum(np.diff(Lam, 2) < -convexity_tol * np.abs(Lam[1:-1]).max(initial=1.0)))
    return RateEstimate(lambdas, Lam, y, I, ess, neg, tuple(flags), normalization)


def estimate_rate_function(
    model: OscillatorModel,
    scheme: StepScheme,
    lambda_grid: np.ndarray | None,
    M0: int,
    seed: int,
    *,
    normalization: float = 2.0,
    workers: int = 1,
) -> RateEstimate:
    """Sample ``M0`` exact draws of ``e_{N0}`` and build the empirical rate function."""
    if M0 < 2:
        raise ValueError("M0 must be >= 2")
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    e = build_error_sampler(model, scheme).sample(MCConfig(M0, seed, workers=workers))
    return rate_from_samples(e, scheme.N, grid, normalization=normalization)


@dataclass(frozen=True)
class CurvatureFit:
    curvature: float
    y_min: float
    lambda_range: tuple[float, float]
    n_points: int


def fit_rate_curvature(est: RateEstimate, *, ess_fraction: float = 0.5, min_points: int = 5) -> CurvatureFit:
    """Fit ``I = c0 + c1 y + c2 y^2`` on the contiguous window around the
    minimiser where the tilted effective sample size stays above
    ``ess_fraction * M``; returns ``2 c2``.  Grid end points are never used.
    """
    M = est.ess.max()
    ok = est.ess >= ess_fraction * M
    ok[0] = ok[-1] = False
    i0 = int(np.argmin(np.where(ok, est.I, np.inf)))
    lo = hi = i0
    while lo - 1 >= 0 and ok[lo - 1]:
        lo -= 1
    while hi + 1 < ok.size and ok[hi + 1]:
        hi += 1
    if hi - lo + 1 < min_points:
        # fall back to the nearest min_points grid points around the minimiser
        half = min_points // 2
        lo, hi = max(1, i0 - half), min(ok.size - 2, i0 + half)
    sl = slice(lo, hi + 1)
    c2, c1, _ = np.polyfit(est.y[sl], est.I[sl], 2)
    return CurvatureFit(2 * c2, -c1 / (2 * c2), (float(est.lambdas[lo]), float(est.lambdas[hi])), hi - lo + 1)


# ---------------------------------------------------------------------------
# trajectory simulation


@dataclass(frozen=True)
class PathCheckReport:
    refine: int
    M: int
    mean_mc: float
    var_mc: float
    var_se: float
    var_exact: float
    var_quadrature: float
    quadrature_bias: float
    extra: dict = field(default_factory=dict)


def quadrature_error_variance(model: OscillatorModel, scheme: StepScheme, refine: int) -> float:
    """Exact variance of ``x_N`` minus the left-point fine-grid approximation of ``X_T``."""
    from .variance import noise_weights

    N, h = scheme.N, scheme.h
    dt = h / refine
    c = np.repeat(noise_weights(scheme), refine)
    s = dt * np.arange(N * refine)
    return model.alpha**2 * dt * math.fsum((c - np.sin(model.T - s)) ** 2)


def joint_path_check(
    model: OscillatorModel, scheme: StepScheme, refine: int, config: MCConfig
) -> PathCheckReport:
    """Run the scheme on simulated Brownian paths and compare with a fine-grid exact solution.

    Each step's increment is the sum of ``refine`` fine increments.  ``X_T`` is
    ``x0 cos T + y0 sin T + alpha sum_k sin(T - s_k) dW_k`` on the fine grid,
    whose left-point rule biases ``Var(e_N)`` by O(h / refine); that bias is
    reported exactly next to the Monte-Carlo estimate.
    """
    if refine < 2:
        raise ValueError("refine must be >= 2")
    N, h, T, a = scheme.N, scheme.h, model.T, model.alpha
    A, b = scheme.A, scheme.b
    dt = h / refine
    kern = np.sin(T - dt * np.arange(N * refine))
    exact_det = model.x0 * math.cos(T) + model.y0 * math.sin(T)

    def draw(gen, rows):
        u = np.tile([model.x0, model.y0], (rows, 1))
        xt = np.full(rows, exact_det)
        for n in range(N):
            dW = gen.standard_normal((rows, refine)) * math.sqrt(dt)
            u = u @ A.T + a * dW.sum(axis=1)[:, None] * b[None, :]
            xt += a * dW @ kern[n * refine : (n + 1) * refine]
        return u[:, 0] - xt

    e = _run_chunks(config, draw)
    var_mc = float(np.var(e, ddof=1))
    M = e.size
    var_se = var_mc * math.sqrt(2 / (M - 1))
    var_exact = variance_brute(model, scheme).variance
    var_q = quadrature_error_variance(model, scheme, refine)
    return PathCheckReport(refine, M, float(e.mean()), var_mc, var_se, var_exact, var_q, var_q - var_exact)
