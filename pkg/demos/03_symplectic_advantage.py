"""Tail probabilities of a symplectic and a non-symplectic method.

With K_s < K_ns the exact Gaussian laws give the symplectic method a tail
probability smaller by a factor of order exp(-N^2 R_eps / 2).
"""

import numpy as np

from errorlaw import OscillatorModel, build_scheme, compare_methods, error_constant, error_law
from errorlaw.variance import crossover_horizon

T, eps, N = 20.0, 0.1, 100
m = OscillatorModel(T=T)
Ks = error_constant("optimal", None, 1.0, T).K_T
Kn = error_constant("pc_em_bem", None, 1.0, T).K_T
laws = tuple(error_law(m, build_scheme(f, N=N, T=T))[0] for f in ("optimal", "pc_em_bem"))
rep = compare_methods(Ks, Kn, T, eps, N, laws)
print(f"K_s = {Ks:.5g}, K_ns = {Kn:.5g}, R_eps = {rep.R_eps:.4g}")
print(f"log P(|e| >= eps): symplectic {rep.log_tail_s:.4g}, non-symplectic {rep.log_tail_ns:.4g}")
print(f"log ratio {rep.log_tail_ratio:.4g} <= bound {rep.log_ratio_bound:.4g}: {rep.ratio_bound_holds}")

#%% for short horizons the order can flip; find where exponential overtakes theta = 1/4
Ts = np.linspace(0.05, 10, 400)
T0 = crossover_horizon(
    lambda t: error_constant("exponential", None, 1.0, t).K_T,
    lambda t: error_constant("theta", {"theta": 0.25}, 1.0, t).K_T,
    Ts,
)
print(f"K_T(exponential) < K_T(theta=1/4) for T beyond about {T0:.3f}")
