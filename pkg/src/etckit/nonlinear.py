"""Nonlinear event-triggered design: ISS certificates, performance
specifications, the derivative/barrier/dynamic trigger evaluators, and the
analytic inter-event bounds for exponential specifications.

The certificate satisfies
    alpha_lo(||x||) <= V(x) <= alpha_hi(||x||),
    LfV(x, e) <= -alpha(||x||) + gamma(||e||),
and triggers are monitored through a surrogate g with
    LfV(x, e) <= g(x, e) <= (sigma - 1) alpha(||x||) + gamma(||e||).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

import numpy as np

from . import numerics
from .errors import ValidationError, WindowExhaustedError


@dataclass(frozen=True)
class QuadConstants:
    """Constants of the exponential-case certificate:
    c1 ||x||^2 <= V <= c2 ||x||^2, decay/gain constants and the closed-loop
    Lipschitz constant L_f."""

    c1: float
    c2: float
    c_alpha: float
    c_gamma: float
    L_f: float
    c3: float | None = None
    c4: float | None = None

    def __post_init__(self):
        for name in ("c1", "c2", "c_alpha", "c_gamma", "L_f"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.c1 > self.c2:
            raise ValidationError("need c1 <= c2")


@dataclass(frozen=True)
class IssCertificate:
    """ISS Lyapunov certificate with class-K comparison functions.

    Lipschitz constants are user inputs (the estimator below is an explicit,
    labeled heuristic). quad is present for certificates with quadratic
    sandwich bounds, which unlock the closed-form inter-event analysis.
    """

    V: Callable[[np.ndarray], float]
    alpha: Callable[[float], float]
    gamma: Callable[[float], float]
    alpha_inv: Callable[[float], float]
    gradV: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L_gamma: float | None = None
    L_alpha_inv: float | None = None
    quad: QuadConstants | None = None

    def surrogate(self, sigma: float) -> Callable[[np.ndarray, np.ndarray], float]:
        """Default surrogate g(x,e) = (sigma-1) alpha(||x||) + gamma(||e||)."""

        def g(x, e):
            x = np.asarray(x, dtype=float).reshape(-1)
            e = np.asarray(e, dtype=float).reshape(-1)
            return (sigma - 1.0) * self.alpha(float(np.linalg.norm(x))) + self.gamma(
                float(np.linalg.norm(e))
            )

        return g


def quadratic_certificate(p, c_alpha: float, c_gamma: float, l_f: float,
                          c3: float | None = None) -> IssCertificate:
    """Certificate V(x) = x'Px with quadratic comparison functions."""
    P = numerics.as_matrix(p)
    eigs = numerics.eig_sym(P)
    if eigs[0] <= 0:
        raise ValidationError("P must be positive definite")
    c1, c2 = float(eigs[0]), float(eigs[-1])

    def V(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(x @ P @ x)

    def gradV(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return 2.0 * (P @ x)

    return IssCertificate(
        V=V,
        gradV=gradV,
        alpha=lambda s: c_alpha * s * s,
        gamma=lambda s: c_gamma * s * s,
        alpha_inv=lambda s: math.sqrt(s / c_alpha),
        L_gamma=None,
        L_alpha_inv=None,
        quad=QuadConstants(
            c1=c1, c2=c2, c_alpha=c_alpha, c_gamma=c_gamma, L_f=l_f,
            c3=c3, c4=2.0 * numerics.spectral_norm(P),
        ),
    )


def certificate_from_plant(plant) -> IssCertificate:
    """Quadratic certificate of a LinearPlant (c3 = lambda_min(Q))."""
    return quadratic_certificate(
        plant.P,
        plant.c_alpha,
        plant.c_gamma,
        plant.lipschitz_bound(),
        c3=float(numerics.eig_sym(plant.Q)[0]),
    )


# ---------------------------------------------------------------------------
# Performance specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialSpec:
    """S(t) = V0 exp(-rt). V0 of None means 'V(x0) of the run'."""

    r: float
    V0: float | None = None

    def __post_init__(self):
        if self.r <= 0:
            raise ValidationError("rate r must be positive")


@dataclass(frozen=True)
class ClassKDerivativeSpec:
    """S solves dS/dt = -h(S) from S0 >= V(x0), with h locally Lipschitz and
    class-K; integrated alongside the plant by the simulation engine."""

    h: Callable[[float], float]
    S0: float | None = None


@dataclass(frozen=True)
class OnlineSpec:
    """Dynamic-trigger specification S(t) = eta(t) + V(x(t))."""

    theta: float
    iota: Callable[[float], float]
    eta0: float | None = None

    def __post_init__(self):
        if self.theta <= 0:
            raise ValidationError("theta must be positive")
        if self.eta0 is not None and self.eta0 < 0:
            raise ValidationError("eta0 must be nonnegative")


PerformanceSpec = Union[ExponentialSpec, ClassKDerivativeSpec, OnlineSpec]


def spec_h(spec: PerformanceSpec) -> Callable[[float], float]:
    """Decay map h with dS/dt = -h(S) for specs that define one."""
    if isinstance(spec, ExponentialSpec):
        return lambda s: spec.r * s
    if isinstance(spec, ClassKDerivativeSpec):
        return spec.h
    raise ValidationError("online specifications have no a-priori decay map h")


def spec_value(spec: PerformanceSpec, t: float, *, v0: float | None = None,
               s_state: float | None = None, eta: float | None = None,
               v_now: float | None = None) -> float:
    """Value of the performance barrier S(t).

    Exponential uses the closed form; ClassKDerivative reads the
    co-integrated state s_state; Online returns eta + V(x(t)).
    """
    if isinstance(spec, ExponentialSpec):
        base = spec.V0 if spec.V0 is not None else v0
        if base is None:
            raise ValidationError("exponential spec needs V0 (or run v0)")
        return base * math.exp(-spec.r * t)
    if isinstance(spec, ClassKDerivativeSpec):
        if s_state is None:
            raise ValidationError("class-K derivative spec needs its integrated state")
        return float(s_state)
    if isinstance(spec, OnlineSpec):
        if eta is None or v_now is None:
            raise ValidationError("online spec needs eta and V(x(t))")
        return float(eta) + float(v_now)
    raise ValidationError(f"unknown spec {spec!r}")


# ---------------------------------------------------------------------------
# Trigger policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeBased:
    sigma: float


@dataclass(frozen=True)
class FunctionBased:
    """Fires when the performance residual S - V reaches zero.

    For general (non-exponential) specs this is exposed as the residual-zero
    crossing; its MIET guarantee is established for the linear case only.
    """


@dataclass(frozen=True)
class PerformanceBarrier:
    """Barrier trigger with residual gain beta: either a class-K callable or
    a linear coefficient c_beta."""

    sigma: float
    beta: Union[float, Callable[[float], float]] = 0.0

    def beta_of(self, residual: float) -> float:
        if callable(self.beta):
            return self.beta(residual)
        return self.beta * residual


@dataclass(frozen=True)
class Dynamic:
    """Dynamic trigger: fires when theta * g(x,e) >= eta, with
    eta' = -iota(eta) - g(x,e). eta0 of None means eta(0) = V(x0)."""

    theta: float
    iota: Callable[[float], float]
    eta0: float | None = None


@dataclass(frozen=True)
class DistributedPB:
    """Distributed barrier trigger driven by dynamic average consensus;
    consumed by the network module (system holds the NetworkSystem)."""

    c_beta: float
    rho_a: float
    rho_z: float
    system: Any = None


TriggerPolicy = Union[DerivativeBased, FunctionBased, PerformanceBarrier,
                      Dynamic, DistributedPB]


@dataclass
class DynamicState:
    """Storage variable of the dynamic trigger; stays nonnegative along runs
    started with eta >= 0."""

    eta: float

    def __post_init__(self):
        if self.eta < 0:
            raise ValidationError("eta must be nonnegative")


def trigger_value_deriv(cert: IssCertificate, spec: PerformanceSpec,
                        sigma: float, x, e) -> float:
    """Derivative-based condition g(x,e) + h(V(x)); fires at >= 0."""
    g = cert.surrogate(sigma)
    return g(x, e) + spec_h(spec)(cert.V(np.asarray(x, dtype=float)))


def trigger_value_barrier(cert: IssCertificate, spec: PerformanceSpec,
                          sigma: float, beta, x, e, t: float,
                          s_value: float | None = None,
                          v0: float | None = None) -> float:
    """Barrier condition g + h(V) - beta(S - V); fires at >= 0."""
    g = cert.surrogate(sigma)
    v = cert.V(np.asarray(x, dtype=float))
    if s_value is None:
        s_value = spec_value(spec, t, v0=v0)
    residual = s_value - v
    beta_val = beta(residual) if callable(beta) else beta * residual
    return g(x, e) + spec_h(spec)(v) - beta_val


def trigger_value_dynamic(theta: float, g_val: float, dyn: DynamicState) -> float:
    """Dynamic condition theta * g - eta; fires at >= 0."""
    return theta * g_val - dyn.eta


# ---------------------------------------------------------------------------
# Exponential-case inter-event analysis
# ---------------------------------------------------------------------------


def _quad_or_raise(cert: IssCertificate) -> QuadConstants:
    if cert.quad is None:
        raise ValidationError("this operation needs quadratic certificate constants")
    return cert.quad


def phi(tau: float, l_f: float) -> float:
    """Sample-and-hold error gain: ||e|| <= phi(t - t_k) ||x|| with
    phi(tau) = L_f tau / (1 - L_f tau), valid for 0 <= tau < 1/L_f."""
    if not 0 <= tau < 1.0 / l_f:
        raise ValidationError(f"phi needs 0 <= tau < 1/L_f = {1.0 / l_f:.6g}")
    return l_f * tau / (1.0 - l_f * tau)


def tau_star(cert: IssCertificate, sigma: float) -> float:
    """Zero crossing of xi: the inter-event time after which the worst-case
    certificate growth rate turns positive."""
    q = _quad_or_raise(cert)
    s = math.sqrt((1.0 - sigma) * q.c_alpha / q.c_gamma)
    return s / (q.L_f * (1.0 + s))


def xi(tau: float, cert: IssCertificate, sigma: float) -> float:
    """Worst-case growth rate of V between events:
    ((sigma-1) c_alpha + c_gamma phi(tau)^2) / c2 before tau*, / c1 after.

    Piecewise exactly as stated; when c1 != c2 the function jumps at tau*.
    """
    q = _quad_or_raise(cert)
    num = (sigma - 1.0) * q.c_alpha + q.c_gamma * phi(tau, q.L_f) ** 2
    return num / (q.c2 if tau < tau_star(cert, sigma) else q.c1)


def xi_integral(cert: IssCertificate, sigma: float, tau: float,
                tol: float = 1e-11) -> float:
    """int_0^tau xi(s) ds, split at the tau* branch point."""
    if tau == 0.0:
        return 0.0
    ts = tau_star(cert, sigma)
    f = lambda s: xi(s, cert, sigma)
    if tau <= ts:
        return numerics.quad(f, 0.0, tau, tol)
    return numerics.quad(f, 0.0, ts, tol) + numerics.quad(f, ts, tau, tol)


def miet_deriv_exp(cert: IssCertificate, sigma: float, r: float) -> float:
    """Closed-form MIET of the derivative-based trigger under an exponential
    specification:
        tau_d = sqrt(((1-sigma) c_alpha - r)/c_gamma)
                / (L_f + L_f sqrt(((1-sigma) c_alpha - r)/c_gamma)).

    Note: this closed form treats the certificate sandwich as normalized
    (c2 = 1). For c2 != 1 the exact crossing xi^{-1}(-r) of the piecewise
    growth rate differs; miet_exp_barrier works with xi directly.
    """
    q = _quad_or_raise(cert)
    rad = ((1.0 - sigma) * q.c_alpha - r) / q.c_gamma
    if rad <= 0:
        raise ValidationError(
            f"inadmissible parameters: (1-sigma) c_alpha - r = "
            f"{(1.0 - sigma) * q.c_alpha - r:.6g} must be positive"
        )
    s = math.sqrt(rad)
    return s / (q.L_f * (1.0 + s))


def miet_exp_barrier(cert: IssCertificate, sigma: float, r: float,
                     c_beta: float, n_grid: int = 4000) -> float:
    """MIET of the barrier trigger under an exponential specification: the
    first tau where
        (xi(tau) + r) exp(int_0^tau xi) = c_beta (e^{-r tau} - exp(int_0^tau xi)).

    Located by a grid scan on (0, 1/L_f) of the exp-normalized residual
    followed by bisection; strictly exceeds miet_deriv_exp.
    """
    if c_beta <= 0:
        raise ValidationError("c_beta must be positive")
    q = _quad_or_raise(cert)
    tau_d = miet_deriv_exp(cert, sigma, r)  # validates admissibility

    def condition(tau: float) -> float:
        # divided through by exp(int xi) > 0 for conditioning
        integral = xi_integral(cert, sigma, tau)
        return (xi(tau, cert, sigma) + r) - c_beta * (
            math.exp(-r * tau - integral) - 1.0
        )

    hi = (1.0 - 1e-9) / q.L_f
    br = numerics.first_sign_change(condition, 0.0, hi, n_grid)
    if br is None:
        taus = np.linspace(0.0, hi, 101)
        raise WindowExhaustedError(
            f"barrier MIET condition has no crossing in (0, {hi:.6g})",
            scan_taus=taus,
            scan_values=np.array([condition(t) for t in taus]),
        )
    root = numerics.bisect_root(condition, numerics.Bracket(br.lo, br.hi, tol=1e-13))
    if root <= tau_d:
        # theory guarantees strictness; numerical ties resolve just above
        root = np.nextafter(tau_d, math.inf)
    return float(root)


def gronwall_bound(cert: IssCertificate, sigma: float, v_at_tk: float,
                   dt: float) -> float:
    """Upper bound V(x(t_k + dt)) <= V(x_k) exp(int_0^dt xi(s) ds)."""
    if dt < 0:
        raise ValidationError("dt must be nonnegative")
    q = _quad_or_raise(cert)
    if dt >= 1.0 / q.L_f:
        raise ValidationError(f"dt must be below 1/L_f = {1.0 / q.L_f:.6g}")
    return v_at_tk * math.exp(xi_integral(cert, sigma, dt))


def miet_deriv_general_bound(l_f: float, d: float) -> float:
    """General nonlinear lower bound 1/(L_f D + L_f) on derivative-trigger
    inter-event times, with D = L_{alpha^-1} L_gamma / (sigma* - sigma)."""
    if l_f <= 0 or d <= 0:
        raise ValidationError("L_f and D must be positive")
    return 1.0 / (l_f * d + l_f)


def estimate_lipschitz(fn: Callable[[np.ndarray], np.ndarray], low, high,
                       n_pairs: int = 10_000, seed: int = 0,
                       safety: float = 1.2) -> float:
    """Heuristic Lipschitz estimate from seeded difference quotients over the
    box [low, high]; reported with a safety factor. Not a certified bound."""
    low = np.asarray(low, dtype=float).reshape(-1)
    high = np.asarray(high, dtype=float).reshape(-1)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_pairs):
        a = rng.uniform(low, high)
        b = rng.uniform(low, high)
        denom = np.linalg.norm(a - b)
        if denom < 1e-12:
            continue
        quot = np.linalg.norm(np.asarray(fn(a)) - np.asarray(fn(b))) / denom
        best = max(best, float(quot))
    return safety * best
