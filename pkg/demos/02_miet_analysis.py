"""Offline inter-event-time analysis on the scalar testbed.

Three quantities, all computable before running anything:
  - the derivative-trigger MIET from the closed form,
  - the barrier-trigger MIET from the matrix definiteness transition,
  - the exponential-case barrier MIET from the growth-rate integral.
The residual gain c_beta interpolates between the derivative trigger
(c_beta -> 0) and the function trigger (c_beta -> infinity).
"""

import numpy as np

from etckit import linear, nonlinear

plant = linear.derive_constants([[1.0]], [[1.0]], [[-2.0]], [[1.0]], theta=2.0)
cert = nonlinear.certificate_from_plant(plant)
r, sigma = 0.25, 0.25

tau_d = nonlinear.miet_deriv_exp(cert, sigma, r)
print(f"closed-form derivative MIET: {tau_d:.6f} s")
print(f"worst-case growth sign change tau*: {nonlinear.tau_star(cert, sigma):.6f} s")

print("\nc_beta sweep of the exponential-case barrier MIET:")
for c_beta in [0.01, 0.1, 0.5, 1.0, 2.0, 4.0]:
    tau_exp = nonlinear.miet_exp_barrier(cert, sigma, r, c_beta)
    print(f"  c_beta = {c_beta:5.2f}  ->  tau = {tau_exp:.6f} s")

print("\nmatrix-form barrier MIET and its localization curve:")
params = linear.barrier_params(plant, r=r, sigma=sigma, c_beta=1.0)
tau_p = linear.miet_linear(plant, params)
print(f"  tau_p = {tau_p:.6f} s")
for tau in np.linspace(0.0, 1.25 * tau_p, 6):
    lam = linear.lambda_min_M(plant, params, float(tau))
    print(f"  lambda_min(M({tau:.3f})) = {lam:+.6f}")
