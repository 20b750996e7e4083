"""CSV artifact emission. Numbers are serialized with 17 significant digits
so artifacts round-trip exactly and reruns compare byte-for-byte."""

from __future__ import annotations

import math

import numpy as np


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj, path) -> None:
    """Columns: t, x_1..x_n, V, S, residual (in this order)."""
    states = np.asarray(traj.states)
    n_x = states.shape[1]
    header = ",".join(["t"] + [f"x_{i + 1}" for i in range(n_x)]
                      + ["V", "S", "residual"])
    lines = [header]
    v = np.asarray(traj.v_values)
    s = np.asarray(traj.s_values)
    for i, t in enumerate(np.asarray(traj.times)):
        row = [fmt17(t)]
        row += [fmt17(val) for val in states[i]]
        row += [fmt17(v[i]), fmt17(s[i]), fmt17(s[i] - v[i])]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_events_csv(events, path) -> None:
    """Columns: k, t_k, dt_k (dt of the first row is undefined -> nan)."""
    lines = ["k,t_k,dt_k"]
    times = np.asarray(events.trigger_times)
    for k, t in enumerate(times):
        dt = math.nan if k == 0 else t - times[k - 1]
        lines.append(f"{k},{fmt17(t)},{fmt17(dt)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_curve_csv(xs, ys, names, path) -> None:
    lines = [",".join(names)]
    for x, y in zip(xs, ys):
        lines.append(f"{fmt17(x)},{fmt17(y)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_columns_csv(columns: dict, path) -> None:
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for i in range(len(arrays[0])):
        lines.append(",".join(fmt17(a[i]) for a in arrays))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
