import json

import numpy as np
import pytest

from fracheat.cli import ExperimentConfig, load_config, main
from fracheat.errors import ConfigurationError

FAST = ["--set", "N=52", "--set", "M=40"]


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_defaults_match_reference_experiments():
    cfg = ExperimentConfig()
    assert (cfg.N, cfg.M, cfg.penalty, cfg.window_lo, cfg.window_hi, cfg.s) == (210, 300, 1e9, 1.7, 1.9, 0.8)


def test_precedence(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# comment\nN = 104\nM = 50\nseed = 3\n")
    cfg = load_config(path, ["M=60"], seed=None, case=2)
    assert (cfg.N, cfg.M, cfg.seed, cfg.case) == (104, 60, 3, 2)
    assert load_config(path, [], seed=9).seed == 9


@pytest.mark.parametrize("override", ["foo=1", "N=abc", "N=6", "s=1.2", "case=3", "window_lo=0.5", "lumped=maybe"])
def test_invalid_config(override):
    with pytest.raises(ConfigurationError):
        load_config(None, [override])


def test_invalid_config_exit_code(tmp_path, capsys):
    code, out = run(tmp_path, "bad", "eig", "--set", "s=1.5")
    assert code == 2 and "configuration error" in capsys.readouterr().err
    assert not (out / "report.json").exists()


def test_eig_default(tmp_path):
    code, out = run(tmp_path, "eig", "eig")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["controllable"] and rep["max_relative_gap_k_le_10"] <= 0.02
    data = np.loadtxt(out / "eig.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(data[:, 1]) > 0)
    assert np.all(np.abs(data[:10, 3]) <= 0.02)


def test_eig_subcritical_order(tmp_path):
    code, out = run(tmp_path, "eig4", "eig", "--set", "s=0.4", *FAST)
    assert code == 0
    assert json.loads((out / "report.json").read_text())["controllable"] is False


def test_solve_zero_data(tmp_path):
    code, out = run(tmp_path, "zero", "solve", "--set", "data=zero", *FAST)
    assert code == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    assert not np.any(data[:, 2])


def test_solve_manufactured_matches_study(tmp_path):
    from fracheat import FracParams, assemble, build_mesh
    from fracheat.grids import TimeGrid
    from fracheat.special import exact_solution, exact_source
    from fracheat.timestep import RobinStepper, initial_nodal, space_time_l2

    code, out = run(tmp_path, "mms", "solve", "--set", "data=manufactured", "--set", "T=1",
                    "--set", "lumped=false", *FAST)
    assert code == 0
    reported = json.loads((out / "report.json").read_text())["l2_error"]
    p = FracParams(0.8)
    m = build_mesh(52)
    grid = TimeGrid(1.0, 40)
    st_ = RobinStepper(assemble(m, p), m, grid, 1e9)
    traj = st_.forward(initial_nodal(m, lambda x: exact_solution(x, 0, 0.8)), None,
                       lambda x, t: exact_source(x, t, 0.8))
    ref = np.array([exact_solution(m.nodes, t, 0.8) for t in grid.times])
    assert reported == pytest.approx(space_time_l2(traj.snapshots, ref, st_.mass_in, grid.dt), rel=1e-15)


def test_control_replay_and_determinism(tmp_path):
    args = ["control", "--seed", "5", "--set", "max_iter=30", *FAST]
    code, out1 = run(tmp_path, "c1", *args)
    code2, out2 = run(tmp_path, "c2", *args)
    assert code == code2 == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    rep = json.loads((out1 / "report.json").read_text())
    for key in ("case", "s", "T", "t_min_estimate", "bracket", "misfit", "iterations", "eta", "ratios", "config"):
        assert key in rep
    assert rep["files"] == ["control.csv"]
    data = np.loadtxt(out1 / "control.csv", delimiter=",", skiprows=1)
    assert data[:, 2].min() >= 0
    code, out3 = run(tmp_path, "replay", "solve", "--set", f"control_csv={out1 / 'control.csv'}", *FAST)
    assert code == 0
    replay = json.loads((out3 / "report.json").read_text())
    assert replay["terminal_misfit"] == pytest.approx(rep["misfit"], rel=1e-10)


def test_mintime_bracket_error(tmp_path, capsys):
    code, out = run(tmp_path, "mt", "mintime", "--set", "t_lo=0.2", "--set", "t_hi=0.3",
                    "--set", "max_iter=20", *FAST)
    assert code == 3 and "bracket error" in capsys.readouterr().err
    assert not (out / "report.json").exists()


def test_mintime_relaxed(tmp_path):
    code, out = run(tmp_path, "mt", "mintime", "--set", "eps_rel=0.12", "--set", "t_lo=0.1",
                    "--set", "t_hi=1.0", "--set", "tol=0.1", "--set", "max_iter=200", *FAST)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    lo, hi = rep["bracket"]
    assert lo < rep["t_min_estimate"] <= hi


def test_diagnose_trend_and_determinism(tmp_path):
    code, out1 = run(tmp_path, "d1", "diagnose", "--seed", "11")
    code2, out2 = run(tmp_path, "d2", "diagnose", "--seed", "11")
    assert code == code2 == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    rep = json.loads((out1 / "report.json").read_text())
    assert rep["eta"] > 0
    ingham = [r["ingham_ratio"] for r in rep["ratios"]]
    obs = [r["obs_ratio"] for r in rep["ratios"]]
    assert [r["T"] for r in rep["ratios"]] == [0.1, 0.5, 1.0]
    assert ingham[0] > ingham[1] > ingham[2] and obs[0] > obs[1] > obs[2]


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "fracheat", "eig", "--out", str(tmp_path / "m"), *FAST],
                         capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "m" / "eig.csv").exists()
