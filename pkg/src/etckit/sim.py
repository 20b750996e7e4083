"""Hybrid sample-and-hold simulation engine.

Integrates xdot = f(x, e) with classical fixed-step RK4 between controller
updates, monitors a scalar trigger condition at every step (fires at >= 0),
localizes each crossing by bisection with re-integration from the step's
start state, and resets e (plus any policy-specific jump) at events.

The error state e is integrated explicitly (edot = -Sel xdot), so the
identity e + Sel x = Sel x_k holds to roundoff between events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nonlinear
from .errors import (
    DivergenceError,
    EtcError,
    ValidationError,
    ZenoSuspectedError,
)
from .nonlinear import (
    ClassKDerivativeSpec,
    DerivativeBased,
    DistributedPB,
    Dynamic,
    ExponentialSpec,
    FunctionBased,
    IssCertificate,
    OnlineSpec,
    PerformanceBarrier,
)

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class VectorField:
    """Closed-loop field xdot = f(x, e) with held-state error e.

    sample_matrix selects which components of x are sampled and held
    (e = Sel x_k - Sel x); None means the full state (Sel = I).
    """

    dim_x: int
    dim_e: int
    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz_L_f: float
    sample_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim_x <= 0 or self.dim_e <= 0:
            raise ValidationError("dimensions must be positive")
        if self.lipschitz_L_f <= 0:
            raise ValidationError("lipschitz_L_f must be positive")
        if self.sample_matrix is None:
            if self.dim_e != self.dim_x:
                raise ValidationError("dim_e != dim_x requires a sample_matrix")
        else:
            sel = np.asarray(self.sample_matrix, dtype=float)
            if sel.shape != (self.dim_e, self.dim_x):
                raise ValidationError(
                    f"sample_matrix must be {(self.dim_e, self.dim_x)}, got {sel.shape}"
                )

    def edot(self, xdot: np.ndarray) -> np.ndarray:
        if self.sample_matrix is None:
            return -xdot
        return -(self.sample_matrix @ xdot)


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    step_h: float = 1e-3
    event_tol: float = 1e-7
    sample_stride: int = 1
    seed: int = 0
    max_events: int = 10**6

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if not 0 < self.step_h < self.horizon:
            raise ValidationError("need 0 < step_h < horizon")
        if not 0 < self.event_tol < self.step_h:
            raise ValidationError("need 0 < event_tol < step_h")
        if self.sample_stride < 1:
            raise ValidationError("sample_stride must be >= 1")


@dataclass
class Trajectory:
    """Sampled run: times, states, certificate values V, barrier values S,
    performance residuals S - V, the held-state errors e, and any auxiliary
    states (spec state, dynamic storage, consensus estimates)."""

    times: np.ndarray
    states: np.ndarray
    v_values: np.ndarray
    s_values: np.ndarray
    residuals: np.ndarray
    errors: np.ndarray
    aux: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class EventLog:
    """Trigger instants (the initial update at t = 0 included), their gaps,
    and the smallest observed gap. empirical_miet is +inf when the run never
    retriggered."""

    trigger_times: np.ndarray
    inter_event_times: np.ndarray
    empirical_miet: float
    update_count: int

    @classmethod
    def from_times(cls, times) -> "EventLog":
        t = np.asarray(times, dtype=float)
        dts = np.diff(t)
        miet = float(dts.min()) if len(dts) else math.inf
        return cls(trigger_times=t, inter_event_times=dts,
                   empirical_miet=miet, update_count=len(t))


@dataclass
class HybridProgram:
    """Engine-facing bundle: trigger condition, auxiliary ODE states (spec
    state, dynamic-trigger storage, consensus estimates) and their jump map."""

    trigger_value: Callable  # (t, t_last, x, e, aux) -> float, fires at >= 0
    v_of: Callable  # (x) -> float
    s_of: Callable  # (t, x, aux) -> float
    n_aux: int = 0
    aux0: Callable = None  # (x0) -> ndarray
    aux_rhs: Callable = None  # (t, x, e, aux) -> ndarray
    jump: Callable = None  # (t, x, aux) -> ndarray  (e reset handled by engine)


def locate_event(g_trig: Callable[[float], float], t_lo: float, t_hi: float,
                 tol: float) -> float:
    """First crossing time of g_trig (negative before, >= 0 after) within
    [t_lo, t_hi], bisected to width tol. Returns t_lo when the condition
    already holds at the window start."""
    if t_hi <= t_lo:
        raise ValidationError("need t_lo < t_hi")
    g_lo = g_trig(t_lo)
    if g_lo >= 0:
        return t_lo
    g_hi = g_trig(t_hi)
    if g_hi < 0:
        raise EtcError("no trigger crossing inside the localization window")
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g_trig(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


class _Recorder:
    def __init__(self, with_aux: bool):
        self.times = []
        self.states = []
        self.vs = []
        self.ss = []
        self.es = []
        self.auxs = [] if with_aux else None

    def add(self, t, x, e, v, s, aux=None):
        if self.times and t <= self.times[-1]:
            return
        self.times.append(t)
        self.states.append(np.array(x))
        self.es.append(np.array(e))
        self.vs.append(v)
        self.ss.append(s)
        if self.auxs is not None:
            self.auxs.append(np.array(aux))

    def build(self) -> Trajectory:
        times = np.array(self.times)
        vs = np.array(self.vs)
        ss = np.array(self.ss)
        return Trajectory(
            times=times,
            states=np.array(self.states),
            v_values=vs,
            s_values=ss,
            residuals=ss - vs,
            errors=np.array(self.es),
            aux=np.array(self.auxs) if self.auxs is not None else None,
        )


def _rk4_step(field: VectorField, program: HybridProgram, t: float,
              x: np.ndarray, e: np.ndarray, aux: np.ndarray, h: float):
    def rhs(ti, xi, ei, ai):
        xdot = field.eval(xi, ei)
        edot = field.edot(xdot)
        adot = program.aux_rhs(ti, xi, ei, ai) if program.n_aux else aux
        return xdot, edot, adot

    k1x, k1e, k1a = rhs(t, x, e, aux)
    k2x, k2e, k2a = rhs(t + 0.5 * h, x + 0.5 * h * k1x, e + 0.5 * h * k1e,
                        aux + 0.5 * h * k1a if program.n_aux else aux)
    k3x, k3e, k3a = rhs(t + 0.5 * h, x + 0.5 * h * k2x, e + 0.5 * h * k2e,
                        aux + 0.5 * h * k2a if program.n_aux else aux)
    k4x, k4e, k4a = rhs(t + h, x + h * k3x, e + h * k3e,
                        aux + h * k3a if program.n_aux else aux)
    x_new = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    e_new = e + (h / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
    aux_new = aux + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a) \
        if program.n_aux else aux
    return x_new, e_new, aux_new


def run_hybrid(field: VectorField, program: HybridProgram, x0,
               cfg: SimConfig) -> tuple[Trajectory, EventLog]:
    """Run the hybrid loop: RK4 between events, per-step trigger monitoring,
    bisection localization, e reset plus program jump at each event."""
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.shape[0] != field.dim_x:
        raise ValidationError(f"x0 must have dim {field.dim_x}")
    e = np.zeros(field.dim_e)
    aux = (np.asarray(program.aux0(x), dtype=float).reshape(-1).copy()
           if program.n_aux else np.zeros(0))

    t = 0.0
    events = [0.0]  # controller update always occurs at t = 0
    rec = _Recorder(with_aux=program.n_aux > 0)
    rec.add(t, x, e, program.v_of(x), program.s_of(t, x, aux), aux)
    prev_val = program.trigger_value(t, events[-1], x, e, aux)
    step_count = 0
    same_instant = 0

    while t < cfg.horizon - 1e-15:
        h = min(cfg.step_h, cfg.horizon - t)
        x_new, e_new, aux_new = _rk4_step(field, program, t, x, e, aux, h)
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > OVERFLOW_GUARD:
            raise DivergenceError(
                f"state norm exceeded {OVERFLOW_GUARD:g} at t = {t + h:.6g}"
            )
        val_new = program.trigger_value(t + h, events[-1], x_new, e_new, aux_new)

        fired = val_new > 0 or (val_new >= 0 and prev_val < 0)
        if fired:
            def g_trig(tq, _t=t, _x=x, _e=e, _aux=aux):
                if tq <= _t:
                    return prev_val
                xs, es, As = _rk4_step(field, program, _t, _x, _e, _aux, tq - _t)
                return program.trigger_value(tq, events[-1], xs, es, As)

            t_ev = locate_event(g_trig, t, t + h, cfg.event_tol)
            if t_ev > t:
                x, e, aux = _rk4_step(field, program, t, x, e, aux, t_ev - t)
            t = t_ev
            rec.add(t, x, e, program.v_of(x), program.s_of(t, x, aux), aux)
            if t_ev == events[-1]:
                same_instant += 1
                if same_instant >= 8:
                    raise ZenoSuspectedError(
                        f"trigger condition stays nonnegative across updates "
                        f"at t = {t:.6g}; the policy cannot be realized from "
                        f"this state",
                        dt_tail=np.zeros(same_instant),
                    )
            else:
                same_instant = 0
            events.append(t)
            if len(events) > cfg.max_events:
                dts = np.diff(events[-21:])
                raise ZenoSuspectedError(
                    f"more than {cfg.max_events} triggers by t = {t:.6g}; "
                    f"inter-event tail {np.array2string(dts, precision=3)}",
                    dt_tail=dts,
                )
            e = np.zeros(field.dim_e)
            if program.n_aux and program.jump is not None:
                aux = np.asarray(program.jump(t, x, aux), dtype=float).reshape(-1)
            prev_val = program.trigger_value(t, events[-1], x, e, aux)
            continue

        t += h
        x, e, aux = x_new, e_new, aux_new
        prev_val = val_new
        step_count += 1
        if step_count % cfg.sample_stride == 0 or t >= cfg.horizon - 1e-15:
            rec.add(t, x, e, program.v_of(x), program.s_of(t, x, aux), aux)

    return rec.build(), EventLog.from_times(events)


def _build_program(field: VectorField, cert: IssCertificate, policy, spec,
                   x0, g_fn=None) -> HybridProgram:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    v0 = cert.V(x0)

    if isinstance(policy, Dynamic) and spec is None:
        spec = OnlineSpec(theta=policy.theta, iota=policy.iota, eta0=policy.eta0)

    if isinstance(spec, ExponentialSpec):
        s_base = spec.V0 if spec.V0 is not None else v0
        if s_base < v0 - 1e-12:
            raise ValidationError("spec V0 must be >= V(x0)")
        r = spec.r
        s_of = lambda t, x, aux: s_base * math.exp(-r * t)
        n_aux, aux0, aux_rhs, jump = 0, None, None, None
        s_aux_index = None
    elif isinstance(spec, ClassKDerivativeSpec):
        s0 = spec.S0 if spec.S0 is not None else v0
        if s0 < v0 - 1e-12:
            raise ValidationError("spec S0 must be >= V(x0)")
        h_fn = spec.h
        n_aux, s_aux_index = 1, 0
        aux0 = lambda _x0: np.array([s0])
        aux_rhs = lambda t, x, e, aux: np.array([-h_fn(aux[0])])
        jump = lambda t, x, aux: aux
        s_of = lambda t, x, aux: float(aux[0])
    elif isinstance(spec, OnlineSpec):
        if not isinstance(policy, Dynamic):
            raise ValidationError("online specs pair with the dynamic policy")
        n_aux, aux0, aux_rhs, jump = 0, None, None, None
        s_aux_index = None
        s_of = None  # installed with the dynamic policy below
    else:
        raise ValidationError(f"unsupported spec {spec!r}")

    g = g_fn
    if g is None and not isinstance(policy, FunctionBased):
        # dynamic triggers monitor raw g (sigma = 0) unless a surrogate is given
        sigma = 0.0 if isinstance(policy, Dynamic) else getattr(policy, "sigma")
        g = cert.surrogate(sigma)

    if isinstance(policy, DerivativeBased):
        h_fn = nonlinear.spec_h(spec)
        trig = lambda t, t_last, x, e, aux: g(x, e) + h_fn(cert.V(x))
    elif isinstance(policy, FunctionBased):
        def trig(t, t_last, x, e, aux):
            return cert.V(x) - s_of(t, x, aux)
    elif isinstance(policy, PerformanceBarrier):
        h_fn = nonlinear.spec_h(spec)
        beta = policy.beta

        def trig(t, t_last, x, e, aux):
            v = cert.V(x)
            residual = s_of(t, x, aux) - v
            b = beta(residual) if callable(beta) else beta * residual
            return g(x, e) + h_fn(v) - b
    elif isinstance(policy, Dynamic):
        if not isinstance(spec, OnlineSpec):
            raise ValidationError("dynamic policy needs an online spec (or None)")
        theta, iota = policy.theta, policy.iota
        eta0 = spec.eta0 if spec.eta0 is not None else v0
        eta_index = n_aux  # appended after any spec state (none for online)
        n_aux += 1
        aux0 = lambda _x0, _eta0=eta0: np.array([_eta0])
        aux_rhs = lambda t, x, e, aux: np.array([-iota(aux[eta_index]) - g(x, e)])
        jump = lambda t, x, aux: aux
        s_of = lambda t, x, aux: float(aux[eta_index]) + cert.V(x)
        trig = lambda t, t_last, x, e, aux: theta * g(x, e) - aux[eta_index]
    else:
        raise ValidationError(f"unsupported policy {policy!r}")

    return HybridProgram(trigger_value=trig, v_of=cert.V, s_of=s_of,
                         n_aux=n_aux, aux0=aux0, aux_rhs=aux_rhs, jump=jump)


def simulate(field: VectorField, cert: IssCertificate, policy, spec, x0,
             cfg: SimConfig, g_fn=None) -> tuple[Trajectory, EventLog]:
    """Simulate the closed loop under a trigger policy and performance spec.

    policy is one of the trigger dataclasses; spec is Exponential,
    ClassKDerivative, or Online (None derives an online spec for Dynamic).
    g_fn optionally replaces the certificate's default surrogate, e.g. with
    the exact Lie derivative or a structured bound.

    Distributed policies carry their own network system and are routed to
    the network module.
    """
    if isinstance(policy, DistributedPB):
        from . import network

        return network.simulate_distributed(policy.system, x0, cfg, policy)
    program = _build_program(field, cert, policy, spec, x0, g_fn=g_fn)
    return run_hybrid(field, program, x0, cfg)


@dataclass
class ErrorBoundReport:
    max_violation: float
    n_checked: int
    n_violations: int


def check_error_bound(traj: Trajectory, events: EventLog, l_f: float,
                      tol: float = 1e-7) -> ErrorBoundReport:
    """Verify ||e(t)|| <= phi(t - t_k) ||x(t)|| + tol at all samples with
    t - t_k < 1/L_f, where t_k is the last update before t."""
    times = traj.times
    t_events = events.trigger_times
    # samples at event instants carry the pre-reset error, so they belong to
    # the interval they close
    idx = np.maximum(np.searchsorted(t_events, times, side="left") - 1, 0)
    max_violation = -math.inf
    n_checked = n_violations = 0
    for i, t in enumerate(times):
        dt = t - t_events[idx[i]]
        if dt >= 1.0 / l_f:
            continue
        bound = nonlinear.phi(dt, l_f) * np.linalg.norm(traj.states[i])
        gap = np.linalg.norm(traj.errors[i]) - bound
        max_violation = max(max_violation, gap)
        n_checked += 1
        if gap > tol:
            n_violations += 1
    return ErrorBoundReport(max_violation=max_violation, n_checked=n_checked,
                            n_violations=n_violations)
