import json, time
import numpy as np
from etckit import platoon

cfg = platoon.PlatoonConfig(n_trials=50, horizon=400.0, seed=2024)
plat = platoon.build_platoon(cfg)
ics = platoon.draw_initial_conditions(cfg)
v0s = np.array([plat.V(x) for x in ics])
runner, designs = platoon.make_runner(plat)
t0 = time.time()
res, _ = runner.run(designs["distributed"], ics, 400.0, step_h=1e-3, event_tol=1e-6)
ok = [r for r in res if r.status == "ok"]
print(json.dumps({
    "wall": round(time.time() - t0), "n_failed": len(res) - len(ok),
    "miet_min": min(r.empirical_miet for r in ok),
    "count_mean": float(np.mean([r.update_count - 1 for r in ok])),
    "count_max": int(max(r.update_count - 1 for r in ok)),
    "relviol_max": float(max(r.max_violation / v0s[i] for i, r in enumerate(res))),
}))
print("DIST DONE")
