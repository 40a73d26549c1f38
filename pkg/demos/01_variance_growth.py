"""Variance of the global error against the horizon T.

Symplectic methods with xi = h keep Var(e_N)/h^2 growing linearly in T,
while the theta-method and the predictor-corrector grow like T^3.
"""

from errorlaw import OscillatorModel, error_constant
from errorlaw.montecarlo import mc_variance_scan
from errorlaw._numerics import loglog_slope

Ts = [20.0, 40.0, 60.0, 80.0]
model = OscillatorModel(alpha=1.0, x0=1.0, y0=0.0)

#%% closed form next to a Monte-Carlo estimate (M = 2000 exact draws per T)
for family, params, N in [("optimal", None, 2**7), ("theta", {"theta": 0.25}, 2**12)]:
    rows = mc_variance_scan(model, family, Ts, N, 2000, seed=1, params=params, n_boot=499)
    print(f"\n{family} (N = {N})")
    print("     T   MC Var/h^2        95% CI          exact    K_T")
    for r in rows:
        print(f"{r.T:6.0f} {r.var_over_h2:11.4g}  [{r.ci_low:9.4g}, {r.ci_high:9.4g}] {r.exact_var_over_h2:9.4g} {r.K_T:9.4g}")
    print("log-log slope of the exact curve:", round(loglog_slope(Ts, [r.exact_var_over_h2 for r in rows]), 3))

#%% the long-horizon constants differ by orders of magnitude
for T in (1.0, 10.0, 100.0):
    ks = error_constant("optimal", None, 1.0, T).K_T
    kt = error_constant("theta", {"theta": 0.25}, 1.0, T).K_T
    print(f"T = {T:5.0f}: K_T optimal {ks:10.4g}   theta=1/4 {kt:10.4g}   ratio {kt / ks:8.3g}")

# the same numbers without writing any code:  errorlaw run --config configs/variance_symplectic.yaml --out out/
