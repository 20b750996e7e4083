"""Linear sample-and-hold machinery: quadratic ISS constants, the three
centralized trigger rules, and the offline minimum inter-event time of the
performance-barrier design.

The closed loop is  xdot = (A+BK) x + BK e  with V(x) = x'Px and
    LfV(x,e) = -x'Qx + 2x'PBKe <= -c_alpha ||x||^2 + c_gamma ||e||^2,
where Young's inequality with parameter theta gives
    c_alpha = lambda_min(Q) - ||PBK||/theta,   c_gamma = theta ||PBK||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import ValidationError, WindowExhaustedError

# keeps trigger expressions well-defined in the zero-gain corner (K = 0)
C_GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class LinearPlant:
    """Closed-loop linear plant with its quadratic certificate constants."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    theta: float
    c_alpha: float
    c_gamma: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def A_cl(self) -> np.ndarray:
        return self.A + self.B @ self.K

    @property
    def BK(self) -> np.ndarray:
        return self.B @ self.K

    @property
    def P_norm(self) -> float:
        return numerics.spectral_norm(self.P)

    def V(self, x) -> float:
        x = numerics.as_vector(x)
        return float(x @ self.P @ x)

    def lie_derivative(self, x, e) -> float:
        """Exact LfV(x, e) = -x'Qx + 2 x'PBK e."""
        x = numerics.as_vector(x)
        e = numerics.as_vector(e)
        return float(-x @ self.Q @ x + 2.0 * x @ self.P @ self.BK @ e)

    def lipschitz_bound(self) -> float:
        """||[A+BK, BK]||, a Lipschitz constant of f in (x, e)."""
        return numerics.spectral_norm(np.hstack([self.A_cl, self.BK]))


@dataclass(frozen=True)
class LinearBarrierParams:
    """Rate r, margin sigma and residual gain c_beta for the linear triggers."""

    r: float
    sigma: float
    c_beta: float = 0.0


def derive_constants(a, b, k, q, theta: float | None = None) -> LinearPlant:
    """Build a LinearPlant, solving the Lyapunov equation and applying
    Young's inequality.

    theta defaults to 2||PBK||/lambda_min(Q), which splits the margin so
    that c_alpha = lambda_min(Q)/2; any theta above ||PBK||/lambda_min(Q)
    is accepted.
    """
    A = numerics.as_matrix(a)
    B = numerics.as_matrix(b)
    K = numerics.as_matrix(k)
    Q = numerics.as_matrix(q)
    if B.shape != (A.shape[0], K.shape[0]) or K.shape[1] != A.shape[0]:
        raise ValidationError(
            f"incompatible shapes: A {A.shape}, B {B.shape}, K {K.shape}"
        )
    A_cl = A + B @ K
    P = numerics.solve_lyapunov(A_cl, Q)  # raises if A_cl not Hurwitz
    lam_min_q = float(numerics.eig_sym(Q)[0])
    pbk_norm = numerics.spectral_norm(P @ B @ K)
    if pbk_norm < C_GAMMA_FLOOR:
        theta = 1.0 if theta is None else theta
        c_alpha = lam_min_q
        c_gamma = C_GAMMA_FLOOR
    else:
        if theta is None:
            theta = 2.0 * pbk_norm / lam_min_q
        theta_min = pbk_norm / lam_min_q
        if theta <= theta_min:
            raise ValidationError(
                f"theta={theta:.6g} too small: needs theta > {theta_min:.6g} "
                "for c_alpha > 0"
            )
        c_alpha = lam_min_q - pbk_norm / theta
        c_gamma = theta * pbk_norm
    return LinearPlant(A=A, B=B, K=K, P=P, Q=Q, theta=float(theta),
                       c_alpha=float(c_alpha), c_gamma=float(c_gamma))


def barrier_params(
    plant: LinearPlant, r: float, sigma: float | None = None, c_beta: float = 0.0
) -> LinearBarrierParams:
    """Validated parameter set: requires r < c_alpha/||P|| and
    sigma in (0, 1 - r||P||/c_alpha). sigma defaults to half the open bound."""
    r_max = plant.c_alpha / plant.P_norm
    if not 0 < r < r_max:
        raise ValidationError(f"need 0 < r < c_alpha/||P|| = {r_max:.6g}, got {r}")
    sigma_max = 1.0 - r * plant.P_norm / plant.c_alpha
    if sigma is None:
        sigma = 0.5 * sigma_max
    if not 0 < sigma < sigma_max:
        raise ValidationError(
            f"need sigma in (0, {sigma_max:.6g}), got {sigma}"
        )
    if c_beta < 0:
        raise ValidationError("c_beta must be nonnegative")
    return LinearBarrierParams(r=float(r), sigma=float(sigma), c_beta=float(c_beta))


def g_linear(plant: LinearPlant, sigma: float, x, e) -> float:
    """Quadratic upper surrogate (sigma-1) c_alpha ||x||^2 + c_gamma ||e||^2."""
    x = numerics.as_vector(x)
    e = numerics.as_vector(e)
    return float(
        (sigma - 1.0) * plant.c_alpha * (x @ x) + plant.c_gamma * (e @ e)
    )


def trigger_value_deriv_lin(plant: LinearPlant, params: LinearBarrierParams, x, e) -> float:
    """Derivative-based trigger condition g(x,e) + r V(x); fires at >= 0."""
    return g_linear(plant, params.sigma, x, e) + params.r * plant.V(x)


def trigger_value_func_lin(plant: LinearPlant, v0: float, r: float, t: float, x) -> float:
    """Function-based trigger condition V(x) - V(x0) exp(-rt); fires at >= 0."""
    return plant.V(x) - v0 * math.exp(-r * t)


def trigger_value_barrier_lin(
    plant: LinearPlant, params: LinearBarrierParams, x, e, t: float, v0: float
) -> float:
    """Barrier trigger condition g + rV - c_beta (V0 e^{-rt} - V); fires at >= 0."""
    v = plant.V(x)
    residual = v0 * math.exp(-params.r * t) - v
    return (
        g_linear(plant, params.sigma, x, e)
        + params.r * v
        - params.c_beta * residual
    )


def G_of_tau(plant: LinearPlant, tau: float) -> np.ndarray:
    """Inter-event state propagator: x(t_k + tau) = G(tau) x_k, where
    G(tau) = exp(A tau) + (int_0^tau exp(A u) du) BK.

    The integral is A^{-1}(exp(A tau) - I) when A is invertible, and an
    entrywise adaptive quadrature otherwise.
    """
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    A = plant.A
    n = plant.n
    exp_at = numerics.mat_exp(A, tau)
    sign, logdet = np.linalg.slogdet(A)
    if sign != 0 and logdet > -300:
        integral = np.linalg.solve(A, exp_at - np.eye(n))
    else:
        integral = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                integral[i, j] = numerics.quad(
                    lambda u, i=i, j=j: numerics.mat_exp(A, u)[i, j], 0.0, tau, 1e-12
                )
    return exp_at + integral @ plant.BK


def M_of_tau(plant: LinearPlant, params: LinearBarrierParams, tau: float) -> np.ndarray:
    """Definiteness-transition matrix of the linear barrier MIET:

    M(tau) = c_beta P e^{-r tau} - c_gamma ||I - G(tau)||^2 I
             - G(tau)' ((c_beta + r) P + (sigma - 1) c_alpha I) G(tau).

    The c_gamma term is the scalar spectral-norm bound on ||e||^2 times the
    identity.
    """
    G = G_of_tau(plant, tau)
    eye = np.eye(plant.n)
    mid = (params.c_beta + params.r) * plant.P + (params.sigma - 1.0) * plant.c_alpha * eye
    m = (
        params.c_beta * plant.P * math.exp(-params.r * tau)
        - plant.c_gamma * numerics.spectral_norm(eye - G) ** 2 * eye
        - G.T @ mid @ G
    )
    return 0.5 * (m + m.T)


def lambda_min_M(plant: LinearPlant, params: LinearBarrierParams, tau: float) -> float:
    return float(numerics.eig_sym(M_of_tau(plant, params, tau))[0])


def _search_window(plant: LinearPlant, params: LinearBarrierParams) -> float:
    """Upper bound of the MIET scan: 10x the derivative-based estimate
    (falling back on the zero-crossing time of the decay margin)."""
    L_f = plant.lipschitz_bound()
    cands = []
    rad_d = ((1.0 - params.sigma) * plant.c_alpha - params.r) / plant.c_gamma
    if rad_d > 0:
        s = math.sqrt(rad_d)
        cands.append(s / (L_f * (1.0 + s)))
    rad_star = (1.0 - params.sigma) * plant.c_alpha / plant.c_gamma
    s = math.sqrt(rad_star)
    cands.append(s / (L_f * (1.0 + s)))
    return 10.0 * max(cands)


def miet_linear(
    plant: LinearPlant, params: LinearBarrierParams, n_grid: int = 2000
) -> float:
    """Minimum inter-event time of the linear barrier trigger: the first
    tau > 0 where M(tau) loses positive definiteness.

    Located as the first zero crossing of lambda_min(M(tau)) on a grid scan
    followed by bisection; lambda-min crossing is used instead of det = 0
    because for n > 1 the determinant can be numerically tiny without a
    definiteness change.
    """
    lam0 = lambda_min_M(plant, params, 0.0)
    if lam0 <= 0:
        raise ValidationError(
            f"M(0) is not positive definite (lambda_min = {lam0:.6g}); "
            "params violate r < c_alpha/||P|| or sigma bound"
        )
    hi = _search_window(plant, params)
    f = lambda tau: lambda_min_M(plant, params, tau)
    br = numerics.first_sign_change(f, 0.0, hi, n_grid)
    if br is None:
        raise WindowExhaustedError(
            f"lambda_min(M(tau)) has no zero crossing in (0, {hi:.6g}]"
        )
    return numerics.bisect_root(f, numerics.Bracket(br.lo, br.hi, tol=1e-12))


def exp_decay_check(traj, v0: float, r: float) -> float:
    """Max over trajectory samples of V(x(t)) - V(x0) e^{-rt} (<= 0 means the
    exponential performance specification held)."""
    t = np.asarray(traj.times)
    v = np.asarray(traj.v_values)
    return float(np.max(v - v0 * np.exp(-r * t)))
