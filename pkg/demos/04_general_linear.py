"""Error laws for a general linear SDE du = A(t) u dt + b(t) dW.

A damped oscillator with a time-varying stiffness, integrated by
Euler-Maruyama.  The covariance of e_N shrinks like h, and Cov/h^2
extrapolates to the matrix H_T that defines the joint rate function.
"""

import math

import numpy as np

from errorlaw.general import (
    LinearModel,
    error_law_general,
    euler_maruyama_condition_check,
    euler_maruyama_scheme,
    extrapolate_error_constants,
    ldp_quantities,
    slln_demo,
)

T = 2.0
model = LinearModel(
    lambda t: np.array([[0.0, 1.0], [-(1.0 + 0.5 * math.sin(t)), -0.2]]),
    lambda t: np.array([[0.0], [0.5]]),
    u0=[1.0, 0.0],
    T=T,
)


def em(n):
    return euler_maruyama_scheme(model, T / n, n)


print("condition check passes:", euler_maruyama_condition_check(model, em, [32, 64, 128]).passed)

for n in (16, 64, 256):
    law = error_law_general(model, em(n))
    print(f"N = {n:4d}  mean {law.mean[0]: .3e} {law.mean[1]: .3e}  var {law.cov[0, 0]:.3e} {law.cov[1, 1]:.3e}")

#%% error constants and the joint rate
H = extrapolate_error_constants(model, em).H_T
print("H_T =\n", np.array2string(H, precision=5))
q = ldp_quantities(H, T)
x = np.array([0.05, -0.02])
print(f"I(x) for x = {x}: joint {q.matrix_rate(x):.4g}, first component alone {q.component_rates[0](x[0]):.4g}")

#%% almost-sure convergence: quantiles of |e_N| shrink as N grows
rep = slln_demo(model, em, [16, 64, 256, 1024], M=20000, seed=0)
for n, q50, q99 in zip(rep.N, rep.q50, rep.q99):
    print(f"N = {n:5d}  median |e| {q50:.3e}  99% {q99:.3e}")
