import math

import numpy as np
import pytest

from etckit import linear, nonlinear, sim
from etckit.errors import DivergenceError, ValidationError, ZenoSuspectedError
from etckit.nonlinear import (
    ClassKDerivativeSpec,
    DerivativeBased,
    Dynamic,
    ExponentialSpec,
    FunctionBased,
    PerformanceBarrier,
)
from etckit.sim import SimConfig, VectorField, locate_event, simulate


def assert_exponential_performance(traj, v0, r, tol=1e-9):
    viol = np.max(traj.v_values - v0 * np.exp(-r * traj.times))
    assert viol <= tol, f"performance violated by {viol:.3e}"


class TestLocateEvent:
    def test_linear_crossing(self):
        got = locate_event(lambda t: t - 0.5, 0.0, 1.0, 1e-9)
        assert abs(got - 0.5) < 1e-8

    def test_already_nonnegative_returns_lo(self):
        assert locate_event(lambda t: 1.0, 0.2, 1.0, 1e-9) == 0.2

    def test_no_crossing_is_error(self):
        from etckit.errors import EtcError

        with pytest.raises(EtcError):
            locate_event(lambda t: -1.0, 0.0, 1.0, 1e-9)


class TestScalarRuns:
    def test_derivative_run_meets_performance(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=10.0, step_h=1e-3, event_tol=1e-7)
        x0 = [1.0]
        traj, events = simulate(
            scalar_field, scalar_cert, DerivativeBased(sigma=0.25),
            ExponentialSpec(r=0.25), x0, cfg,
        )
        assert_exponential_performance(traj, scalar_cert.V(np.array(x0)), 0.25)
        assert events.trigger_times[0] == 0.0
        assert events.update_count > 1

    def test_zero_initial_state_never_retriggers(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=2.0)
        traj, events = simulate(
            scalar_field, scalar_cert, DerivativeBased(sigma=0.25),
            ExponentialSpec(r=0.25), [0.0], cfg,
        )
        assert events.update_count == 1
        assert np.all(traj.states == 0.0)
        assert events.empirical_miet == math.inf

    def test_held_state_identity_between_events(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=3.0, sample_stride=7)
        traj, events = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        t_ev = events.trigger_times
        idx = np.searchsorted(t_ev, traj.times, side="right") - 1
        # x_k is the state at the sample coinciding with the event time
        ev_states = {}
        for i, t in enumerate(traj.times):
            if np.min(np.abs(t_ev - t)) < 1e-12:
                ev_states[np.argmin(np.abs(t_ev - t))] = traj.states[i]
        for i, t in enumerate(traj.times):
            k = idx[i]
            if k not in ev_states:
                continue
            # sample at the event itself carries the pre-reset error
            if np.min(np.abs(t_ev - t)) < 1e-12:
                continue
            xk = ev_states[k]
            assert abs((traj.errors[i] + traj.states[i]) - xk) < 1e-10

    def test_barrier_run_miet_bounded_below(self, scalar_field, scalar_plant,
                                            scalar_cert, scalar_params):
        cfg = SimConfig(horizon=20.0, event_tol=1e-7)
        traj, events = simulate(
            scalar_field, scalar_cert,
            PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        tau_p = linear.miet_linear(scalar_plant, scalar_params)
        assert events.empirical_miet >= tau_p - cfg.event_tol
        assert_exponential_performance(traj, scalar_cert.V(np.array([1.0])), 0.25)

    def test_first_event_matches_dense_step_oracle(self, scalar_field, scalar_cert):
        first = {}
        for h in (1e-3, 1e-5):
            cfg = SimConfig(horizon=2.0, step_h=h, event_tol=1e-9,
                            sample_stride=1000)
            _, events = simulate(
                scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
                ExponentialSpec(r=0.25), [1.0], cfg,
            )
            first[h] = events.trigger_times[1]
        assert abs(first[1e-3] - first[1e-5]) < 1e-6

    def test_halving_step_moves_events_little(self, scalar_field, scalar_cert):
        times = {}
        for h in (1e-3, 5e-4):
            cfg = SimConfig(horizon=5.0, step_h=h, event_tol=1e-7, sample_stride=100)
            _, events = simulate(
                scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
                ExponentialSpec(r=0.25), [1.0], cfg,
            )
            times[h] = events.trigger_times[:5]
        n = min(len(times[1e-3]), len(times[5e-4]))
        shift = np.max(np.abs(times[1e-3][:n] - times[5e-4][:n]))
        assert shift < 10 * 1e-7 + 1e-9

    def test_event_count_bounded_by_miet(self, scalar_field, scalar_plant,
                                         scalar_cert, scalar_params):
        cfg = SimConfig(horizon=10.0)
        _, events = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        tau_p = linear.miet_linear(scalar_plant, scalar_params)
        assert events.update_count <= cfg.horizon / tau_p + 1 + 1  # +1 initial

    def test_propagator_reproduces_rk4_between_events(self, scalar_field,
                                                      scalar_plant, scalar_cert):
        cfg = SimConfig(horizon=0.3, step_h=1e-4, sample_stride=1)
        traj, events = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        t1 = events.trigger_times[1] if len(events.trigger_times) > 1 else cfg.horizon
        for i, t in enumerate(traj.times):
            if t >= min(t1, 0.25):
                break
            want = linear.G_of_tau(scalar_plant, float(t))[0, 0] * 1.0
            assert abs(traj.states[i, 0] - want) < 1e-8


class TestTriggerOrderingPreview:
    def test_next_event_ordering_scalar(self, scalar_field, scalar_cert):
        rng = np.random.default_rng(17)
        for _ in range(10):
            x0 = rng.uniform(-2.0, 2.0, size=1)
            if abs(x0[0]) < 0.1:
                continue
            lift = rng.uniform(1.0, 2.0)
            v0 = scalar_cert.V(x0) * lift
            cfg = SimConfig(horizon=8.0, event_tol=1e-8)
            nexts = {}
            for name, policy in [
                ("d", DerivativeBased(sigma=0.25)),
                ("p", PerformanceBarrier(sigma=0.25, beta=1.0)),
                ("f", FunctionBased()),
            ]:
                _, events = simulate(
                    scalar_field, scalar_cert, policy,
                    ExponentialSpec(r=0.25, V0=v0), x0, cfg,
                )
                nexts[name] = (
                    events.trigger_times[1]
                    if len(events.trigger_times) > 1
                    else math.inf
                )
            assert nexts["d"] <= nexts["p"] + 1e-6
            assert nexts["p"] <= nexts["f"] + 1e-6


class TestSpecIntegration:
    def test_class_k_quadratic_h_closed_form(self, scalar_cert):
        # static field, S' = -S^2 from S0 = 1 has S(t) = 1/(1+t)
        field = VectorField(dim_x=1, dim_e=1,
                            eval=lambda x, e: np.zeros(1), lipschitz_L_f=1.0)
        cfg = SimConfig(horizon=5.0, sample_stride=10)
        traj, _ = simulate(
            field, scalar_cert, FunctionBased(),
            ClassKDerivativeSpec(h=lambda s: s * s, S0=1.0), [0.0], cfg,
        )
        want = 1.0 / (1.0 + traj.times)
        assert np.max(np.abs(traj.s_values - want)) < 1e-8

    def test_class_k_linear_h_matches_exponential(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=4.0, sample_stride=10)
        x0 = [1.0]
        traj_k, ev_k = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ClassKDerivativeSpec(h=lambda s: 0.25 * s), x0, cfg,
        )
        traj_e, ev_e = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), x0, cfg,
        )
        v0 = scalar_cert.V(np.array(x0))
        assert np.max(np.abs(traj_k.s_values - v0 * np.exp(-0.25 * traj_k.times))) < 1e-9
        n = min(len(ev_k.trigger_times), len(ev_e.trigger_times))
        assert np.max(np.abs(ev_k.trigger_times[:n] - ev_e.trigger_times[:n])) < 1e-5

    def test_class_k_spec_strictly_decreasing_positive(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=5.0, sample_stride=5)
        traj, _ = simulate(
            scalar_field, scalar_cert, DerivativeBased(sigma=0.25),
            ClassKDerivativeSpec(h=lambda s: 0.2 * s, S0=1.0), [1.0], cfg,
        )
        assert np.all(traj.s_values > 0)
        assert np.all(np.diff(traj.s_values) < 0)

    def test_dynamic_run_eta_nonnegative(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=10.0, sample_stride=5)
        traj, events = simulate(
            scalar_field, scalar_cert,
            Dynamic(theta=1.0, iota=lambda s: s), None, [1.0], cfg,
        )
        assert traj.aux is not None
        assert np.all(traj.aux[:, 0] >= -1e-12)
        # online spec: S = eta + V, residual = eta >= 0
        assert np.all(traj.residuals >= -1e-12)
        assert events.update_count >= 1


class TestNagumoAtContact:
    def test_dV_below_dS_at_barrier_contact(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=3.0, sample_stride=1)
        traj, _ = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        t, v, s = traj.times, traj.v_values, traj.s_values
        dv = np.diff(v) / np.diff(t)
        ds = np.diff(s) / np.diff(t)
        contact = traj.residuals[:-1] <= 1e-6 * np.maximum(s[:-1], 1e-30)
        assert np.any(contact)  # S(0) = V(x0) exercises the boundary case
        assert np.all(dv[contact] <= ds[contact] + 1e-4)


class TestErrorBound:
    def test_scalar_run_has_no_violations(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=5.0, sample_stride=3)
        traj, events = simulate(
            scalar_field, scalar_cert, PerformanceBarrier(sigma=0.25, beta=1.0),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        report = sim.check_error_bound(traj, events, scalar_field.lipschitz_L_f)
        assert report.n_checked > 0
        assert report.n_violations == 0
        assert report.max_violation <= 1e-7


class TestGuards:
    def test_divergence_guard(self, scalar_cert):
        field = VectorField(dim_x=1, dim_e=1,
                            eval=lambda x, e: 40.0 * x, lipschitz_L_f=40.0)
        cfg = SimConfig(horizon=10.0)
        with pytest.raises(DivergenceError):
            simulate(field, scalar_cert, FunctionBased(),
                     ExponentialSpec(r=0.25, V0=1e30), [1.0], cfg)

    def test_zeno_guard_reports_tail(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=10.0, max_events=10)
        # an always-met condition fires at every step
        program = sim.HybridProgram(
            trigger_value=lambda t, t_last, x, e, aux: 1.0,
            v_of=scalar_cert.V,
            s_of=lambda t, x, aux: math.nan,
        )
        with pytest.raises(ZenoSuspectedError) as exc:
            sim.run_hybrid(scalar_field, program, [1.0], cfg)
        assert len(exc.value.dt_tail) > 0

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SimConfig(horizon=1.0, step_h=2.0)
        with pytest.raises(ValidationError):
            SimConfig(horizon=1.0, step_h=1e-3, event_tol=1e-2)


class TestGronwallAlongRun:
    def test_inter_event_samples_below_bound(self, scalar_field, scalar_cert):
        cfg = SimConfig(horizon=5.0, sample_stride=1)
        traj, events = simulate(
            scalar_field, scalar_cert, DerivativeBased(sigma=0.25),
            ExponentialSpec(r=0.25), [1.0], cfg,
        )
        t_ev = events.trigger_times
        v_at = {}
        for i, t in enumerate(traj.times):
            hit = np.argmin(np.abs(t_ev - t))
            if abs(t_ev[hit] - t) < 1e-12:
                v_at[hit] = traj.v_values[i]
        limit = 1.0 / scalar_cert.quad.L_f
        idx = np.searchsorted(t_ev, traj.times, side="right") - 1
        checked = 0
        for i, t in enumerate(traj.times):
            k = idx[i]
            dt = t - t_ev[k]
            if k not in v_at or dt >= 0.95 * limit:
                continue
            bound = nonlinear.gronwall_bound(scalar_cert, 0.25, v_at[k], float(dt))
            assert traj.v_values[i] <= bound + 1e-8
            checked += 1
        assert checked > 100
