import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from errorlaw._numerics import loglog_slope
from errorlaw.oscillator import NoSpectralAngle, OscillatorModel, build_scheme
from errorlaw.variance import (
    BETA_CASE2_ROOTS,
    NoClosedForm,
    WrongBranch,
    XiEqHExpansion,
    XI_EQ_H_EXPANSIONS,
    beta_prefactor,
    compare_methods,
    crossover_horizon,
    error_constant,
    error_law,
    error_mean,
    extrapolate_constant,
    is_beta_case2,
    rate_function_closed,
    theta_constant,
    variance_brute,
    variance_nonsymplectic,
    variance_symplectic,
    xi_eq_h_constant,
    xi_eq_h_linear_coefficient,
)

from conftest import CATALOG_SCHEMES, scheme_id


def _quad_variance(model, scheme, nodes=200_000):
    """Midpoint-rule evaluation of sum_j int (c_j - sin(T - s))^2 ds."""
    from errorlaw.variance import noise_weights

    c = noise_weights(scheme)
    n_per = nodes // scheme.N
    tot = 0.0
    for j, cj in enumerate(c):
        s = scheme.h * (j + (np.arange(n_per) + 0.5) / n_per)
        tot += np.sum((cj - np.sin(model.T - s)) ** 2) * scheme.h / n_per
    return model.alpha**2 * tot


# --- mean ---------------------------------------------------------------------


def test_mean_vanishes_without_initial_data(make):
    m, s = make("theta", {"theta": 0.25}, 3.0, 17, x0=0.0, y0=0.0)
    assert error_mean(m, s) == 0.0


@pytest.mark.parametrize("N", [1, 8, 100])
def test_exponential_method_has_zero_mean(make, N):
    m, s = make("exponential", {}, 2.7, N, x0=0.3, y0=-1.1)
    assert abs(error_mean(m, s)) < 1e-13


def test_mean_against_matrix_power(make):
    m, s = make("beta", {"beta": 0.0}, 2.0, 20)
    AN = np.linalg.matrix_power(s.A, 20)
    assert error_mean(m, s) == pytest.approx(AN[0, 0] - math.cos(2.0), abs=1e-12)


# --- brute oracle -------------------------------------------------------------


def test_noise_free_single_step():
    h = 0.7
    s = build_scheme("custom", {"a11": 1.0, "a12": 0.0, "a21": 0.0, "a22": 1.0, "b1": 0.0, "b2": 0.0}, N=1, T=h)
    m = OscillatorModel(alpha=1.3, T=h)
    assert variance_brute(m, s).variance == pytest.approx(1.3**2 * (h / 2 - math.sin(2 * h) / 4), rel=1e-14)


@pytest.mark.parametrize("fp", CATALOG_SCHEMES[::3], ids=scheme_id)
def test_brute_matches_direct_quadrature(make, fp):
    m, s = make(*fp, 2.0, 10)
    assert variance_brute(m, s).variance == pytest.approx(_quad_variance(m, s), rel=1e-6)


@pytest.mark.parametrize("fp", CATALOG_SCHEMES, ids=scheme_id)
def test_brute_law_invariants(make, fp):
    m, s = make(*fp, 5.0, 64, alpha=0.7)
    law = variance_brute(m, s)
    assert np.all(law.per_interval_var >= 0)
    assert law.variance == pytest.approx(math.fsum(law.per_interval_var), rel=1e-12)


# --- closed forms -------------------------------------------------------------


def test_exponential_closed_form_matches_brute(make):
    m, s = make("exponential", {}, 2.0, 8)
    law, br = variance_symplectic(m, s)
    assert br.branch == "symplectic_xi_eq_h"
    assert law.variance == pytest.approx(variance_brute(m, s).variance, rel=1e-10)


def test_theta_closed_form_matches_brute(make):
    m, s = make("theta", {"theta": 0.25}, 2.0, 8)
    law, br = variance_nonsymplectic(m, s)
    assert br.branch == "nonsymplectic"
    assert set(br.H_terms) == {"H1+", "H1-", "H2+", "H2-", "H3+", "H3-", "H4", "H5", "H6"}
    assert law.variance == pytest.approx(variance_brute(m, s).variance, rel=1e-10)


@pytest.mark.parametrize("family, params", [("theta", {"theta": 0.25}), ("pc_em_bem", {})])
def test_nonsymplectic_examples(make, family, params):
    m, s = make(family, params, 2.0, 16)
    assert variance_nonsymplectic(m, s)[0].variance == pytest.approx(variance_brute(m, s).variance, rel=1e-9)


@given(
    beta=st.sampled_from([0.0, 0.1, 0.25, 0.4, 0.5, 0.75, 1.0]),
    T=st.floats(0.5, 20.0),
    N=st.integers(8, 300),
    alpha=st.floats(0.2, 3.0),
)
def test_symplectic_closed_form_matches_brute(beta, T, N, alpha):
    m = OscillatorModel(alpha=alpha, T=T)
    s = build_scheme("beta", {"beta": beta}, N=N, T=T)
    try:
        law, _ = variance_symplectic(m, s)
    except NoSpectralAngle:
        return
    assert law.variance == pytest.approx(variance_brute(m, s).variance, rel=1e-9)


@pytest.mark.parametrize("fp", CATALOG_SCHEMES, ids=scheme_id)
def test_s_decomposition_sums_to_variance(make, fp):
    m, s = make(*fp, 5.0, 64)
    law, br = error_law(m, s)
    assert br.S1 + br.S2 + br.S3 + br.S4 == pytest.approx(law.variance, rel=1e-10)


def test_symplectic_branch_labels(make):
    _, br = error_law(*make("beta", {"beta": 0.25}, 2.0, 16))
    assert br.branch == "symplectic_xi_neq_h" and len(br.Z_terms) == 6
    _, br = error_law(*make("optimal", {}, 2.0, 16))
    assert br.branch == "symplectic_xi_eq_h"


def test_case2_beta_uses_general_form(make):
    # xi - h = O(h^5) sits inside the xi = h tolerance but is not zero
    m, s = make("beta", {"beta": BETA_CASE2_ROOTS[1]}, 10.0, 256)
    law, br = variance_symplectic(m, s)
    assert "xi_near_h_general_form" in br.flags
    assert law.variance == pytest.approx(variance_brute(m, s).variance, rel=1e-9)


def test_ambiguity_band_is_flagged(make):
    m, s = make("beta", {"beta": 0.25}, 2.0, 256)
    law, br = variance_symplectic(m, s)
    assert "xi_h_ambiguity_band" in br.flags
    assert law.variance == pytest.approx(variance_brute(m, s).variance, rel=1e-9)


def test_wrong_branch_is_signalled(make):
    with pytest.raises(WrongBranch):
        variance_nonsymplectic(*make("optimal", {}, 1.0, 8))
    with pytest.raises(WrongBranch):
        variance_symplectic(*make("theta", {"theta": 1.0}, 1.0, 8))


def test_real_eigenvalues_rejected_by_closed_form_but_not_by_oracle(make):
    m, s = make("beta", {"beta": 0.0}, 20.0, 8)
    with pytest.raises(NoSpectralAngle):
        error_law(m, s)
    assert variance_brute(m, s).variance > 0


# --- error constants ----------------------------------------------------------


def test_optimal_constant_value():
    for T in (1.0, 7.0, 20.0):
        K = error_constant("optimal", None, 1.0, T)
        assert K.K_T == pytest.approx(T / 24 + math.sin(2 * T) / 48, rel=1e-15)
        assert K.formula_id == "xi_eq_h"


def test_midpoint_constant_value():
    K = error_constant("beta", {"beta": 0.5}, 1.0, 20.0)
    assert K.K_T == pytest.approx(0.25 * (20 / 6 + math.sin(40) / 12), rel=1e-15)
    assert K.formula_id == "beta_case1"


def test_case2_detection_is_algebraic():
    for r in BETA_CASE2_ROOTS:
        assert is_beta_case2(r)
        assert 12 * r * r - 12 * r + 1 == pytest.approx(0, abs=1e-14)
        assert error_constant("beta", {"beta": r}, 1.0, 2.0).formula_id == "beta_case2"
    assert not is_beta_case2(0.09)


def test_printed_case2_constant_is_available_but_differs():
    r = BETA_CASE2_ROOTS[0]
    printed = error_constant("beta", {"beta": r}, 1.0, 2.0, as_printed=True).K_T
    assert printed == pytest.approx(7 * 2 / 36 + math.sin(4) / 16)
    assert error_constant("beta", {"beta": r}, 1.0, 2.0).K_T == pytest.approx(0.75 * (2 / 6 + math.sin(4) / 12))


def test_theta_constant_printed_variant():
    T = 2.0
    corrected = theta_constant(0.25, 1.0, T)
    printed = theta_constant(0.25, 1.0, T, as_printed=True)
    assert printed - corrected == pytest.approx(-T * 6 * 0.25**3 / 6)
    assert theta_constant(0.0, 1.0, T) == theta_constant(0.0, 1.0, T, as_printed=True)
    assert theta_constant(1.0, 1.0, T, as_printed=True) < 0


@pytest.mark.parametrize("fp", CATALOG_SCHEMES, ids=scheme_id)
@pytest.mark.parametrize("T", [2.0, 20.0])
def test_constants_against_extrapolation(fp, T):
    m = OscillatorModel(T=T)
    ext, rep = extrapolate_constant(m, lambda n: build_scheme(*fp, N=n, T=T))
    K = error_constant(*fp, 1.0, T)
    assert K.K_T >= 0
    assert ext.K_T == pytest.approx(K.K_T, rel=1e-3)
    assert ext.formula_id == "numeric_extrapolation"


def test_theta_quarter_from_displayed_structure():
    # (2 theta - 1)^2 = 1/4 for theta = 1/4
    T = 3.0
    K = theta_constant(0.25, 1.0, T)
    s2, c2 = math.sin(2 * T), math.cos(2 * T)
    expected = 0.25 / 24 * T**3 - s2 * 0.25 / 16 * T**2 + ((27 / 64 + 1 / 64) / 6 + 0.25 * c2 / 16) * T + (1 / 48 + 0.25 / 32) * s2
    assert K == pytest.approx(expected, rel=1e-14)


def test_unknown_family_needs_extrapolation():
    with pytest.raises(NoClosedForm):
        error_constant("custom", {}, 1.0, 1.0)


@pytest.mark.parametrize("name", sorted(XI_EQ_H_EXPANSIONS))
def test_xi_eq_h_expansions_match_schemes(name):
    e = XI_EQ_H_EXPANSIONS[name]
    h = 1e-3
    s = build_scheme(name, N=1, T=h)
    a22 = 1 + sum(c * h**k for c, k in zip(e.a22_coefficients(), (2, 3, 4)))
    assert s.a22 == pytest.approx(a22, abs=1e-14)
    assert s.b1 == pytest.approx(e.b1_1 * h + e.b1_2 * h**2 + e.b1_3 * h**3, abs=1e-13)


def test_xi_eq_h_constant_generic_expansion():
    e = XiEqHExpansion(b1_1=0.5)
    assert xi_eq_h_constant(e, 1.0, 4.0) == pytest.approx(4 / 24 + math.sin(8) / 48)


def test_asymptotic_remainder_order(make):
    # |Var/h^2 - K_T| <= C h along N = 2^k
    T = 2.0
    K = error_constant("beta", {"beta": 0.25}, 1.0, T).K_T
    hs, gaps = [], []
    for k in range(8, 15):
        m, s = make("beta", {"beta": 0.25}, T, 2**k)
        hs.append(s.h)
        gaps.append(abs(variance_brute(m, s).variance / s.h**2 - K))
    assert loglog_slope(hs, gaps) >= 0.9


@pytest.mark.parametrize("family, params, N, slope, tol", [
    ("exponential", {}, 128, 1, 0.1),
    ("integral", {}, 128, 1, 0.1),
    ("optimal", {}, 128, 1, 0.1),
    ("half_h", {}, 128, 1, 0.1),
    ("theta", {"theta": 0.25}, 2**15, 3, 0.15),
    ("pc_em_bem", {}, 2**15, 3, 0.15),
])
def test_growth_in_T(make, family, params, N, slope, tol):
    Ts = [20.0, 40.0, 60.0, 80.0]
    vals = []
    for T in Ts:
        m, s = make(family, params, T, N)
        vals.append(error_law(m, s)[0].variance / s.h**2)
    assert loglog_slope(Ts, vals) == pytest.approx(slope, abs=tol)


def test_beta_prefactor_minimised_at_midpoint():
    grid = np.linspace(0, 1, 1001)
    assert grid[np.argmin([beta_prefactor(b) for b in grid])] == pytest.approx(0.5)


@given(b=st.floats(-5, 5), s=st.floats(-5, 5))
def test_xi_eq_h_linear_coefficient_bound(b, s):
    assert xi_eq_h_linear_coefficient(b, s) >= 0.25 - 1e-12
    assert xi_eq_h_linear_coefficient(0.5, 0.0) == pytest.approx(0.25)


# --- rates and comparison -----------------------------------------------------


@given(K=st.floats(1e-3, 1e3), T=st.floats(0.1, 100), x=st.floats(-10, 10), c=st.floats(-10, 10))
def test_rate_function_homogeneity(K, T, x, c):
    I = rate_function_closed(K, T)
    assert I(c * x) == pytest.approx(c * c * I(x), rel=1e-12, abs=1e-300)


def test_rate_function_examples():
    T = 3.0
    I = rate_function_closed(error_constant("optimal", None, 1.0, T).K_T, T)
    assert I(0.0) == 0.0
    assert I(0.4) == pytest.approx(24 * 0.16 / (2 * T**3 + T**2 * math.sin(2 * T)))
    I = rate_function_closed(error_constant("pc_em_bem", None, 1.0, T).K_T, T)
    den = 4 * T**5 - 6 * math.sin(2 * T) * T**4 + (12 * math.cos(T) ** 2 + 10) * T**3 + 5 * T**2 * math.sin(2 * T)
    assert I(0.4) == pytest.approx(48 * 0.16 / den)


def test_degenerate_rate():
    I = rate_function_closed(0.0, 1.0)
    assert I(0.0) == 0.0 and math.isinf(I(1e-3))


def test_compare_equal_constants():
    from errorlaw.variance import ErrorLaw

    law = ErrorLaw(0.0, 1e-3)
    rep = compare_methods(0.5, 0.5, 2.0, 0.1, 10, (law, law))
    assert rep.R_eps == 0 and rep.ratio_bound == 1.0 and not rep.premise_holds


def test_compare_optimal_with_pc(make):
    T, N, eps = 20.0, 100, 0.1
    Ks = error_constant("optimal", None, 1.0, T).K_T
    Kn = error_constant("pc_em_bem", None, 1.0, T).K_T
    laws = (error_law(*make("optimal", {}, T, N))[0], error_law(*make("pc_em_bem", {}, T, N))[0])
    rep = compare_methods(Ks, Kn, T, eps, N, laws)
    assert rep.R_eps > 0 and rep.centered_inequality_holds and rep.ratio_bound_holds


def test_exponential_beats_theta_at_long_horizon():
    T = 80.0
    assert error_constant("exponential", None, 1.0, T).K_T < error_constant("theta", {"theta": 0.25}, 1.0, T).K_T


def test_crossover_horizon():
    Ts = np.linspace(0.05, 10, 400)
    T0 = crossover_horizon(
        lambda t: error_constant("exponential", None, 1.0, t).K_T,
        lambda t: error_constant("theta", {"theta": 0.25}, 1.0, t).K_T,
        Ts,
    )
    assert 0 < T0 < 10


def test_exponential_finite_N_close_to_constant(make):
    m, s = make("exponential", {}, 20.0, 2**7)
    K = error_constant("exponential", None, 1.0, 20.0).K_T
    assert abs(variance_brute(m, s).variance / s.h**2 - K) / K < s.h


def test_midpoint_finite_N_gap_vanishes(make):
    # at T = 40 the remainder constant is large; check it shrinks at least linearly in h
    T = 40.0
    K = error_constant("beta", {"beta": 0.5}, 1.0, T).K_T
    hs, gaps = [], []
    for N in (2**9, 2**10, 2**11):
        m, s = make("beta", {"beta": 0.5}, T, N)
        hs.append(s.h)
        gaps.append(abs(variance_brute(m, s).variance / s.h**2 - K))
    assert loglog_slope(hs, gaps) >= 0.9
