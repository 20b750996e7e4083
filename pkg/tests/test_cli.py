import json
from pathlib import Path

import numpy as np
import pytest

from etckit.cli import main
from etckit.config import parse_config
from etckit.errors import ConfigError

SCALAR_INI = """\
[plant]
a = 1
b = 1
k = -2
q = 1
theta = 2

[trigger]
policy = barrier
sigma = 0.25
c_beta = 1.0
r = 0.25

[sim]
x0 = 1.0
horizon = 5.0
step_h = 0.001
event_tol = 1e-7
sample_stride = 10
"""


@pytest.fixture()
def scalar_ini(tmp_path):
    path = tmp_path / "scalar.ini"
    path.write_text(SCALAR_INI)
    return path


class TestParseConfig:
    def test_file_values_verbatim(self, scalar_ini):
        cfg = parse_config(scalar_ini)
        assert cfg.get("trigger", "r") == 0.25
        assert cfg.get("plant", "a").shape == (1, 1)

    def test_override_wins(self, scalar_ini):
        cfg = parse_config(scalar_ini, ["trigger.r=0.08"])
        assert cfg.get("trigger", "r") == 0.08

    def test_negative_rate_rejected_naming_rule(self, scalar_ini):
        with pytest.raises(ConfigError, match="positive"):
            parse_config(scalar_ini, ["trigger.r=-1"])

    def test_unknown_key_suggests_nearest(self, scalar_ini):
        with pytest.raises(ConfigError, match="did you mean"):
            parse_config(scalar_ini, ["trigger.sigm=0.3"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.ini")

    def test_bad_policy_rejected(self, scalar_ini):
        with pytest.raises(ConfigError, match="policy"):
            parse_config(scalar_ini, ["trigger.policy=banana"])


class TestSimulateCommand:
    def test_writes_artifacts(self, scalar_ini, tmp_path, capsys):
        out = tmp_path / "artifacts"
        rc = main(["simulate", "--config", str(scalar_ini), "--out", str(out)])
        assert rc == 0
        assert (out / "trajectory.csv").exists()
        assert (out / "events.csv").exists()
        assert (out / "effective_config.ini").exists()
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,x_1,V,S,residual"
        ev_header = (out / "events.csv").read_text().splitlines()[0]
        assert ev_header == "k,t_k,dt_k"

    def test_byte_identical_reruns(self, scalar_ini, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(scalar_ini), "--out", str(out1), "--seed", "3"])
        main(["simulate", "--config", str(scalar_ini), "--out", str(out2), "--seed", "3"])
        assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
        assert (out1 / "events.csv").read_bytes() == (out2 / "events.csv").read_bytes()

    def test_config_error_exit_1(self, tmp_path):
        rc = main(["simulate", "--config", str(tmp_path / "missing.ini"),
                   "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_numerical_error_exit_2(self, scalar_ini, tmp_path):
        # unstable plant: A, B given but K = 0 cannot stabilize
        rc = main([
            "simulate", "--config", str(scalar_ini),
            "--out", str(tmp_path / "o"), "--set", "plant.k=0",
        ])
        assert rc == 2  # infeasible Lyapunov solve -> numerical failure


class TestMietCommand:
    def test_prints_both_miets_and_curve(self, scalar_ini, tmp_path, capsys):
        out = tmp_path / "miet"
        rc = main(["miet", "--config", str(scalar_ini), "--out", str(out)])
        assert rc == 0
        captured = capsys.readouterr().out
        tau_d = float(captured.split("tau_d = ")[1].splitlines()[0])
        tau_p = float(captured.split("tau_p = ")[1].splitlines()[0])
        assert tau_p > tau_d > 0
        lines = (out / "miet_curve.csv").read_text().splitlines()
        assert lines[0] == "tau,lambda_min"
        vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        # curve starts positive and crosses zero
        assert vals[0, 1] > 0
        assert np.any(vals[:, 1] < 0)


class TestConsensusCheckCommand:
    def test_bound_holds_and_csv_written(self, tmp_path, capsys):
        edges = tmp_path / "graph.txt"
        edges.write_text("1 2\n")
        ini = tmp_path / "c.ini"
        ini.write_text(
            f"[consensus]\nedges_file = {edges}\nrho = 1.0\namps = 1 0\n"
            "rate = 1.0\nhorizon = 10.0\n"
        )
        out = tmp_path / "out"
        rc = main(["consensus-check", "--config", str(ini), "--out", str(out)])
        assert rc == 0
        lines = (out / "consensus.csv").read_text().splitlines()
        assert lines[0] == "t,eps_norm,bound"
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert np.all(data[:, 1] <= data[:, 2] + 1e-6)

    def test_disconnected_graph_is_config_error(self, tmp_path):
        edges = tmp_path / "graph.txt"
        edges.write_text("1 2\n3 4\n")
        ini = tmp_path / "c.ini"
        ini.write_text(f"[consensus]\nedges_file = {edges}\namps = 1 0 0 0\n")
        rc = main(["consensus-check", "--config", str(ini),
                   "--out", str(tmp_path / "o")])
        assert rc == 1


class TestBenchmarkCommand:
    def test_mini_benchmark_artifacts(self, tmp_path):
        out = tmp_path / "bench"
        rc = main([
            "benchmark", "platoon", "--out", str(out), "--seed", "5",
            "--set", "benchmark.n_trials=2", "--set", "benchmark.horizon=5.0",
            "--emit-trajectories",
        ])
        assert rc == 0
        table = (out / "table.csv").read_text().splitlines()
        assert table[0].startswith("design,empirical_miet,avg_updates")
        assert len(table) == 6  # header + five designs
        report = json.loads((out / "report.json").read_text())
        assert set(report["designs"]) == {
            "derivative", "barrier", "dynamic_strong_decay",
            "dynamic_weak_decay", "distributed",
        }
        assert (out / "trajectory_barrier_trial000.csv").exists()

    def test_benchmark_determinism(self, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            rc = main([
                "benchmark", "platoon", "--out", str(out), "--seed", "9",
                "--set", "benchmark.n_trials=2", "--set", "benchmark.horizon=3.0",
            ])
            assert rc == 0
            outs.append((out / "table.csv").read_bytes())
        assert outs[0] == outs[1]
