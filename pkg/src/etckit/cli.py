"""Command-line entry point.

Subcommands: simulate | miet | benchmark platoon | consensus-check.
Common flags: --config PATH, --out DIR, --seed N, --set section.key=value
(repeatable). Exit codes: 0 success, 1 configuration errors, 2 numerical
failures (divergence, suspected Zeno, bracketing, exhausted scan windows).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import csvio, linear, network, nonlinear, platoon, sim
from .config import RunConfig, parse_config
from .errors import (
    AccuracyError,
    BracketError,
    ConfigError,
    DivergenceError,
    EtcError,
    InfeasibilityError,
    ValidationError,
    WindowExhaustedError,
    ZenoSuspectedError,
)

NUMERICAL_ERRORS = (
    DivergenceError,
    ZenoSuspectedError,
    BracketError,
    WindowExhaustedError,
    AccuracyError,
    InfeasibilityError,
)
CONFIG_ERRORS = (ConfigError, ValidationError)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: RunConfig, out: Path) -> None:
    (out / "effective_config.ini").write_text(cfg.effective_ini())


def _build_plant(cfg: RunConfig) -> linear.LinearPlant:
    return linear.derive_constants(
        cfg.require("plant", "a"),
        cfg.require("plant", "b"),
        cfg.require("plant", "k"),
        cfg.require("plant", "q"),
        theta=cfg.get("plant", "theta"),
    )


def _build_policy(cfg: RunConfig):
    policy = cfg.get("trigger", "policy", "barrier")
    sigma = cfg.get("trigger", "sigma", 0.25)
    c_beta = cfg.get("trigger", "c_beta", 1.0)
    if policy == "derivative":
        return nonlinear.DerivativeBased(sigma=sigma)
    if policy == "barrier":
        return nonlinear.PerformanceBarrier(sigma=sigma, beta=c_beta)
    if policy == "function":
        return nonlinear.FunctionBased()
    if policy == "dynamic":
        theta = cfg.get("trigger", "theta", 1.0)
        c_iota = cfg.get("trigger", "c_iota", 1.0)
        eta0 = cfg.get("trigger", "eta0")
        return nonlinear.Dynamic(theta=theta, iota=lambda s: c_iota * s, eta0=eta0)
    raise ConfigError(f"unsupported policy {policy!r}")


def _sim_config(cfg: RunConfig, seed: int) -> sim.SimConfig:
    return sim.SimConfig(
        horizon=cfg.get("sim", "horizon", 10.0),
        step_h=cfg.get("sim", "step_h", 1e-3),
        event_tol=cfg.get("sim", "event_tol", 1e-7),
        sample_stride=cfg.get("sim", "sample_stride", 10),
        seed=seed,
        max_events=cfg.get("sim", "max_events", 10**6),
    )


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    plant = _build_plant(cfg)
    r = cfg.get("trigger", "r", 0.25)
    params = linear.barrier_params(
        plant, r=r, sigma=cfg.get("trigger", "sigma"),
        c_beta=cfg.get("trigger", "c_beta", 0.0),
    )
    cert = nonlinear.certificate_from_plant(plant)
    field = sim.VectorField(
        dim_x=plant.n, dim_e=plant.n,
        eval=lambda x, e: plant.A_cl @ x + plant.BK @ e,
        lipschitz_L_f=plant.lipschitz_bound(),
    )
    x0 = np.asarray(cfg.require("sim", "x0"), dtype=float)
    policy = _build_policy(cfg)
    spec = None if isinstance(policy, nonlinear.Dynamic) \
        else nonlinear.ExponentialSpec(r=r)
    run_cfg = _sim_config(cfg, args.seed)
    traj, events = sim.simulate(field, cert, policy, spec, x0, run_cfg)
    csvio.write_trajectory_csv(traj, out / "trajectory.csv")
    csvio.write_events_csv(events, out / "events.csv")
    _echo_config(cfg, out)
    print(f"simulate: {events.update_count} updates, "
          f"empirical MIET {events.empirical_miet:.6g} s, "
          f"max residual violation {float(np.max(-traj.residuals)):.3g}")
    return 0


def cmd_miet(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    plant = _build_plant(cfg)
    params = linear.barrier_params(
        plant,
        r=cfg.get("trigger", "r", 0.25),
        sigma=cfg.get("trigger", "sigma"),
        c_beta=cfg.get("trigger", "c_beta", 1.0),
    )
    n_grid = cfg.get("miet", "n_grid", 2000)
    params_d = linear.LinearBarrierParams(r=params.r, sigma=params.sigma, c_beta=0.0)
    tau_d = linear.miet_linear(plant, params_d, n_grid=n_grid)
    tau_p = linear.miet_linear(plant, params, n_grid=n_grid)
    hi = 1.25 * tau_p
    taus = np.linspace(0.0, hi, 400)
    lams = [linear.lambda_min_M(plant, params, float(t)) for t in taus]
    csvio.write_curve_csv(taus, lams, ["tau", "lambda_min"], out / "miet_curve.csv")
    _echo_config(cfg, out)
    print(f"tau_d = {tau_d:.12g}")
    print(f"tau_p = {tau_p:.12g}")
    return 0


def cmd_benchmark(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    kwargs = {}
    mapping = {
        "n_vehicles": "n_vehicles", "k_p": "k_p", "k_d": "k_d", "t_v": "T_v",
        "t_d": "T_d", "r": "r", "c_beta": "c_beta",
        "sigma_factor": "sigma_factor", "rho_a": "rho_a", "rho_z": "rho_z",
        "horizon": "horizon", "n_trials": "n_trials", "ic_scale": "ic_scale",
        "theta": "theta", "c_iota_strong": "c_iota_strong",
        "c_iota_weak": "c_iota_weak", "eta0_scale": "eta0_scale",
        "step_h": "step_h", "event_tol": "event_tol",
        "record_stride": "record_stride",
    }
    for key, attr in mapping.items():
        val = cfg.get("benchmark", key)
        if val is not None:
            kwargs[attr] = val
    kwargs["seed"] = args.seed
    pcfg = platoon.PlatoonConfig(**kwargs)
    n_traj = cfg.get("benchmark", "traj_trials", 1) if args.emit_trajectories else 0
    report = platoon.run_benchmark(pcfg, record_trials=tuple(range(n_traj)))
    platoon.write_table_csv(report, out / "table.csv")
    platoon.write_report_json(report, out / "report.json")
    if n_traj:
        for name in platoon.DESIGN_ORDER:
            for tr, rec in report.recorded[name].items():
                platoon.write_trajectory_csv(
                    rec, out / f"trajectory_{name}_trial{tr:03d}.csv"
                )
    _echo_config(cfg, out)
    for name in platoon.DESIGN_ORDER:
        agg = report.aggregates[name]
        print(f"{name}: miet={agg.empirical_miet:.6g} "
              f"avg_updates={agg.avg_updates:.4g} "
              f"max_violation={agg.max_perf_violation:.4g}")
    return 0


def cmd_consensus_check(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    edges_file = cfg.require("consensus", "edges_file")
    edges = []
    n_max = 0
    for line in Path(edges_file).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        i, j = (int(v) for v in line.split())
        edges.append((i, j))
        n_max = max(n_max, i, j)
    topo = network.NetworkTopology.from_edges(n_max, edges)
    amps = np.asarray(cfg.get("consensus", "amps", np.array([1.0, 0.0])))
    if amps.shape[0] != topo.n_agents:
        raise ConfigError(
            f"[consensus] amps needs {topo.n_agents} entries, got {amps.shape[0]}"
        )
    rate = cfg.get("consensus", "rate", 1.0)
    rho = cfg.get("consensus", "rho", 1.0)
    horizon = cfg.get("consensus", "horizon", 10.0)
    step_h = cfg.get("consensus", "step_h", 1e-3)
    w = lambda t: amps * math.exp(-rate * t)
    w_dot = lambda t: -rate * amps * math.exp(-rate * t)
    if cfg.get("consensus", "init", "local") == "local":
        y0 = w(0.0)
    else:
        y0 = np.full(topo.n_agents, float(np.sum(w(0.0))) / topo.n_agents)
    c_w_dot = cfg.get("consensus", "c_w_dot", rate * float(np.linalg.norm(amps)))
    times, ys, eps = network.simulate_consensus(
        topo, w, w_dot, rho, y0, horizon, step_h=step_h
    )
    eps0 = float(eps[0])
    bounds = np.array([
        network.tracking_bound(c_w_dot, rate, rho, topo.lambda2, eps0, float(t))
        for t in times
    ])
    csvio.write_columns_csv(
        {"t": times, "eps_norm": eps, "bound": bounds}, out / "consensus.csv"
    )
    _echo_config(cfg, out)
    worst = float(np.max(eps - bounds))
    print(f"consensus-check: max(||eps|| - bound) = {worst:.3e} "
          f"({'holds' if worst <= 1e-6 else 'VIOLATED'})")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etckit",
        description="Event-triggered control simulation and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI configuration file")
        p.add_argument("--out", default="out", help="artifact output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config value")

    common(sub.add_parser("simulate", help="run one closed-loop simulation"))
    common(sub.add_parser("miet", help="analytic minimum inter-event times"))
    bench = sub.add_parser("benchmark", help="multi-design benchmarks")
    bench.add_argument("target", choices=["platoon"])
    bench.add_argument("--emit-trajectories", action="store_true",
                       help="write per-trial trajectory CSVs for plotting")
    common(bench)
    common(sub.add_parser("consensus-check",
                          help="verify the consensus tracking bound"))
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides)
        if args.seed is not None:
            cfg.values.setdefault("run", {})["seed"] = args.seed
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "miet":
            return cmd_miet(cfg, args)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, args)
        if args.command == "consensus-check":
            return cmd_consensus_check(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
