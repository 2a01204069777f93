import json
import os

import numpy as np
import pytest

from shardevo.cli import main
from shardevo.dynamics import Trajectory

GAME = {"game": {"alpha": [0.7, 0.5, 0.3, 0.1], "tau": 0.01,
                 "cost": {"kind": "log1p"}}}
X0 = "0.4498,0.3369,0.2132,0.001"


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "game.json"
    p.write_text(json.dumps(GAME))
    return str(p)


class TestSimulate:
    def test_writes_trajectory_and_svg(self, cfg_path, tmp_path):
        out = tmp_path / "traj.csv"
        svg = tmp_path / "traj.svg"
        rc = main(["simulate", cfg_path, "--x0", X0, "--t-end", "5",
                   "-o", str(out), "--svg", str(svg)])
        assert rc == 0
        traj = Trajectory.from_csv(out.read_text())
        assert traj.M == 4 and traj.times[-1] == pytest.approx(5.0)
        assert svg.read_text().lstrip().startswith("<?xml")

    def test_bad_x0_exits_2(self, cfg_path, tmp_path, capsys):
        rc = main(["simulate", cfg_path, "--x0", "0.5,0.5",
                   "-o", str(tmp_path / "t.csv")])
        assert rc == 2
        assert "x0" in capsys.readouterr().err

    def test_malformed_config_exits_1_without_output(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "t.csv"
        rc = main(["simulate", str(bad), "--x0", X0, "-o", str(out)])
        assert rc == 1
        assert not out.exists()
        assert not list(tmp_path.glob(".shard-evo-*"))   # no temp leftovers

    def test_ambiguous_config_exits_2(self, tmp_path):
        p = tmp_path / "both.json"
        p.write_text(json.dumps({"game": GAME["game"], "elastico": {}}))
        rc = main(["simulate", str(p), "--x0", X0,
                   "-o", str(tmp_path / "t.csv")])
        assert rc == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerical_failure_exits_3(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text(json.dumps({
            "game": {"alpha": [0.9, 0.1], "tau": 1e-3},
            "integrator": {"step": 10.0, "renormalize": False}}))
        # coarse unrenormalized steps on a stiff instance blow up
        out = tmp_path / "t.csv"
        rc = main(["simulate", str(p), "--x0", "0.5,0.5", "--t-end", "100",
                   "-o", str(out)])
        assert rc == 3
        assert not out.exists()   # atomic write: nothing half-finished


class TestPayoffs:
    def test_payoff_table(self, cfg_path, tmp_path):
        traj = tmp_path / "traj.csv"
        main(["simulate", cfg_path, "--x0", X0, "--t-end", "2",
              "-o", str(traj)])
        out = tmp_path / "payoffs.csv"
        rc = main(["payoffs", cfg_path, str(traj), "-o", str(out)])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t,u1,u2,u3,u4"
        first = [float(v) for v in lines[1].split(",")]
        assert first[4] == pytest.approx(9.09, abs=0.01)   # near-empty chain

    def test_missing_trajectory_exits_1(self, cfg_path, tmp_path):
        rc = main(["payoffs", cfg_path, str(tmp_path / "nope.csv"),
                   "-o", str(tmp_path / "p.csv")])
        assert rc == 1


class TestEquilibria:
    def test_reports_w_star_and_stable_state(self, cfg_path, tmp_path, capsys):
        out = tmp_path / "eq.csv"
        rc = main(["equilibria", cfg_path, "-o", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "w_star = 4" in printed
        assert "W=(1, 2, 3, 4)" in printed
        assert "0.4225" in printed
        rows = out.read_text().strip().split("\n")[1:]
        assert len(rows) == 15
        verdicts = (tmp_path / "eq_verdicts.csv").read_text()
        assert verdicts.count("asymptotically-stable") == 1


class TestSweep:
    def test_monotone_columns(self, cfg_path, tmp_path):
        out = tmp_path / "sweep.csv"
        grid = ",".join(f"{k:.1f}" for k in np.arange(0.5, 1.51, 0.25))
        rc = main(["sweep", cfg_path, "--grid", grid, "-o", str(out),
                   "--svg", str(tmp_path / "sweep.svg")])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "kappa,x1,x2,x3,x4,b_bar,stable_found"
        data = np.array([[float(v) for v in ln.split(",")]
                         for ln in lines[1:]])
        assert np.all(data[:, 6] == 1.0)
        assert np.all(np.diff(data[:, 1]) >= -1e-12)   # x1 grows with price
        assert np.all(np.diff(data[:, 4]) <= 1e-12)    # x4 shrinks
        # the unscaled point reproduces the baseline equilibrium
        anchor = data[np.isclose(data[:, 0], 1.0)][0]
        assert anchor[1:5] == pytest.approx([0.4225, 0.3148, 0.1975, 0.0652],
                                            abs=1e-3)

    def test_bad_grid_exits_2(self, cfg_path, tmp_path):
        rc = main(["sweep", cfg_path, "--grid", "1.0,0.5",
                   "-o", str(tmp_path / "s.csv")])
        assert rc == 2


class TestAgents:
    def test_writes_three_files_and_echoes_seed(self, cfg_path, tmp_path,
                                                capsys):
        out = tmp_path / "agents.csv"
        rc = main(["agents", cfg_path, "--x0", X0, "-N", "500",
                   "--horizon", "10", "--seed", "7", "-o", str(out)])
        assert rc == 0
        assert "seed=7" in capsys.readouterr().out
        assert out.read_text().startswith("# seed=7 N=500\n")
        assert (tmp_path / "agents_ode.csv").exists()
        dev = (tmp_path / "agents_deviation.csv").read_text()
        assert dev.startswith("# seed=7 sup_norm=")

    def test_tiny_scale_exits_3(self, cfg_path, tmp_path):
        rc = main(["agents", cfg_path, "--x0", X0, "-N", "100",
                   "--horizon", "1", "--seed", "1", "--imitation-scale",
                   "0.01", "-o", str(tmp_path / "a.csv")])
        assert rc == 3


class TestEpochModel:
    BASE = ["epoch-model", "--c", "1", "--s", "2", "--T", "10",
            "--sigma", "0.05", "--mu", "100", "--r", "0.01",
            "--tau-tilde", "1"]

    def test_reference_numbers(self, capsys):
        rc = main(self.BASE + ["--n", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "f(n) = 2.083333333" in out
        assert "epoch_time  = 123.8333333" in out

    def test_monte_carlo_reports_stderr(self, capsys):
        rc = main(self.BASE + ["--n", "4", "--method", "monte-carlo",
                               "--trials", "20000", "--seed", "3"])
        assert rc == 0
        assert "stderr" in capsys.readouterr().out

    def test_derive_game_writes_loadable_config(self, tmp_path, capsys):
        dest = tmp_path / "derived.json"
        rc = main(self.BASE + ["--n", "4", "--N", "1000",
                               "--derive-game", str(dest)])
        assert rc == 0
        cfg = json.loads(dest.read_text())["game"]
        assert cfg["alpha"] == [100 * 0.01 / 1000]
        assert cfg["tau"] == pytest.approx(1e-3)
        assert cfg["cost"]["kind"] == "tabulated"
        # and the derived file round-trips through the simulate path
        rc = main(["simulate", str(dest), "--x0", "1.0", "--t-end", "1",
                   "-o", str(tmp_path / "one.csv")])
        assert rc == 0

    def test_invalid_params_exit_2(self):
        rc = main(self.BASE + ["--n", "0"])
        assert rc == 2
