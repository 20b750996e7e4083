"""Abridged five-vehicle platoon comparison (2 trials, 60 s).

The full benchmark (50 trials, 400 s, the acceptance-grade run) is the CLI's
job:

    etckit benchmark platoon --out bench_out --emit-trajectories

and its artifacts feed the plotter in frontend/. This script runs a small
version to show the moving parts and the update economy across designs.
"""

from etckit import platoon

cfg = platoon.PlatoonConfig(n_trials=2, horizon=60.0, seed=11)
plat = platoon.build_platoon(cfg)
print(f"certificate weight pi = {plat.pi:.1f}")
print(f"certified decay rates: exact {plat.rate_exact:.4f}, "
      f"chain bound {plat.rate_chain:.4f} (barrier rate r = {cfg.r})")

report = platoon.run_benchmark(cfg, record_trials=())
print(f"\n{'design':24s} {'avg updates':>12s} {'miet [s]':>10s} {'rel. violation':>15s}")
for name in platoon.DESIGN_ORDER:
    agg = report.aggregates[name]
    print(f"{name:24s} {agg.avg_updates:12.1f} {agg.empirical_miet:10.4f} "
          f"{agg.max_perf_violation:15.3e}")
print("\n(violations are max(V - V0 e^{-rt}) / V0; negative means the")
print(" exponential envelope held with margin)")
