"""Command-line front end: ``python -m fracheat {eig,solve,control,mintime,diagnose}``."""
from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .control import (DEFAULT_EPS_REL, BracketError, build_case_problem, case_initial, dump_report,
                      minimal_time_search, observability_diagnostics, projected_gradient_solve,
                      read_control_csv, write_control_csv)
from .errors import ConfigurationError, DomainError, FracHeatError
from .fem import assemble, build_mesh
from .grids import ControlGrid, TimeGrid
from .special import FracParams, eigenvalue_asymptotic, exact_solution, exact_source
from .spectral import compute_eigenbasis
from .timestep import RobinStepper, initial_nodal, space_time_l2, write_trajectory_csv

TARGET_NOTE = ("target exterior datum is zero; constrained controllability is only guaranteed "
               "for reference trajectories with exterior datum bounded below by a positive constant")


@dataclass(frozen=True)
class ExperimentConfig:
    s: float = 0.8
    N: int = 210
    M: int = 300
    penalty: float = 1e9
    window_lo: float = 1.7
    window_hi: float = 1.9
    case: int = 1
    data: str = "case"          # solve only: case | zero | manufactured
    T: float = 0.4739
    max_iter: int = 400
    eps_rel: float = DEFAULT_EPS_REL
    seed: int = 0
    K: int = 40
    lumped: bool = True
    t_lo: float = 0.2
    t_hi: float = 1.0
    tol: float = 0.01
    ensemble: int = 200
    T_sweep: str = "0.1,0.5,1.0"
    control_csv: str = ""       # solve only: replay a control.csv written by control/mintime

    def validate(self) -> None:
        try:
            FracParams(self.s, (self.window_lo, self.window_hi))
            build_mesh(self.N, (self.window_lo, self.window_hi))
            TimeGrid(self.T, self.M)
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.case not in (1, 2):
            raise ConfigurationError(f"case must be 1 or 2, got {self.case}")
        if self.data not in ("case", "zero", "manufactured"):
            raise ConfigurationError(f"unknown data selector {self.data!r}")
        for name in ("penalty", "eps_rel", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_iter < 0 or self.K < 1 or self.ensemble < 1:
            raise ConfigurationError("max_iter, K and ensemble must be nonnegative/positive")
        self.sweep()

    def sweep(self) -> list[float]:
        try:
            vals = [float(v) for v in self.T_sweep.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"bad T_sweep {self.T_sweep!r}") from exc
        if not vals or min(vals) <= 0:
            raise ConfigurationError("T_sweep needs positive horizons")
        return vals

    def echo(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError(raw)
            return int(as_float)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return {k: _coerce(k, v) for k, v in parser["config"].items()}


def load_config(path=None, overrides=(), seed=None, case=None) -> ExperimentConfig:
    """Defaults, then the file, then ``--set`` pairs and the dedicated flags."""
    values: dict = {}
    if path is not None:
        values.update(read_config_file(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = _coerce(k.strip(), v)
    if seed is not None:
        values["seed"] = seed
    if case is not None:
        values["case"] = case
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


# -- shared setup ------------------------------------------------------------

def _setup(cfg: ExperimentConfig):
    params = FracParams(cfg.s, (cfg.window_lo, cfg.window_hi))
    mesh = build_mesh(cfg.N, (cfg.window_lo, cfg.window_hi))
    return params, mesh, assemble(mesh, params)


def _diagnostics(cfg, params, mesh, assembly, horizons) -> dict:
    basis = compute_eigenbasis(assembly, mesh, params, K=min(cfg.K, mesh.interior_ids.size))
    K = min(20, basis.K)
    out = {"eta": basis.eta(K), "gap": float(np.min(np.diff(basis.lambdas[:K]))), "ratios": []}
    for T in horizons:
        rep = observability_diagnostics(basis, T, max(cfg.ensemble, 50), cfg.seed, K)
        out["ratios"].append({"T": T, "ingham_ratio": rep.ingham_ratio, "obs_ratio": rep.obs_ratio})
    return out


def _finish(out: Path, report: dict, files: list[Path]) -> dict:
    report["files"] = sorted(p.name for p in files)
    dump_report(out / "report.json", report)
    return report


# -- commands ------------------------------------------------------------------

def cmd_eig(cfg: ExperimentConfig, out: Path) -> dict:
    params, mesh, assembly = _setup(cfg)
    basis = compute_eigenbasis(assembly, mesh, params, K=min(cfg.K, mesh.interior_ids.size))
    k = np.arange(1, basis.K + 1)
    asym = eigenvalue_asymptotic(k, cfg.s)
    gap = (basis.lambdas - asym) / asym
    l1 = basis.l1_normal_traces()
    path = out / "eig.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda_k", "asymptotic", "relative_gap", "l1_normal_trace"])
        for i in range(basis.K):
            w.writerow([int(k[i])] + [f"{v:.17g}" for v in (basis.lambdas[i], asym[i], gap[i], l1[i])])
    first = min(10, basis.K)
    report = {
        "command": "eig", "s": cfg.s, "controllable": params.controllable,
        "max_relative_gap_k_le_10": float(np.max(np.abs(gap[:first]))),
        "eta": basis.eta(min(20, basis.K)), "config": cfg.echo(),
    }
    return _finish(out, report, [path])


def cmd_solve(cfg: ExperimentConfig, out: Path, control: ControlGrid | None = None) -> dict:
    params, mesh, assembly = _setup(cfg)
    grid = TimeGrid(cfg.T, cfg.M)
    if control is None and cfg.control_csv:
        control = read_control_csv(cfg.control_csv, mesh, grid)
    stepper = RobinStepper(assembly, mesh, grid, cfg.penalty, cfg.lumped)
    report = {"command": "solve", "data": cfg.data, "s": cfg.s, "T": cfg.T, "config": cfg.echo()}
    if cfg.data == "manufactured":
        u0 = initial_nodal(mesh, lambda x: exact_solution(x, 0.0, cfg.s))
        traj = stepper.forward(u0, None, lambda x, t: exact_source(x, t, cfg.s))
        ref = np.array([exact_solution(mesh.nodes, t, cfg.s) for t in grid.times])
        report["l2_error"] = space_time_l2(traj.snapshots, ref, stepper.mass_in, grid.dt)
    elif cfg.data == "zero":
        traj = stepper.forward(np.zeros(mesh.num_nodes), control)
    else:
        traj = stepper.forward(initial_nodal(mesh, case_initial(cfg.case)), control)
        target = exact_solution(mesh.nodes, cfg.T, cfg.s)
        r = traj.final - target
        report["case"] = cfg.case
        report["terminal_misfit"] = math.sqrt(stepper.inner(r, r))
        report["target_norm"] = math.sqrt(stepper.inner(target, target))
    path = write_trajectory_csv(out / "trajectory.csv", traj, mesh)
    return _finish(out, report, [path])


def cmd_control(cfg: ExperimentConfig, out: Path) -> dict:
    params, mesh, assembly = _setup(cfg)
    problem = build_case_problem(cfg.case, cfg.T, mesh, assembly, cfg.M, cfg.penalty, cfg.lumped,
                                 cfg.eps_rel, 0.0, cfg.max_iter)
    res = projected_gradient_solve(problem)
    path = write_control_csv(out / "control.csv", res.control, mesh)
    diag = _diagnostics(cfg, params, mesh, assembly, [cfg.T])
    report = {
        "command": "control", "case": cfg.case, "s": cfg.s, "T": cfg.T,
        "t_min_estimate": None, "bracket": None,
        "misfit": res.misfit, "eps": problem.eps, "relative_misfit": res.misfit / problem.target_norm(),
        "feasible": res.converged, "status": res.status, "iterations": res.iterations,
        "control_sup_norm": res.control.sup_norm(),
        "eta": diag["eta"], "ratios": diag["ratios"], "note": TARGET_NOTE, "config": cfg.echo(),
    }
    return _finish(out, report, [path])


def cmd_mintime(cfg: ExperimentConfig, out: Path) -> dict:
    params, mesh, assembly = _setup(cfg)
    template = build_case_problem(cfg.case, cfg.t_hi, mesh, assembly, cfg.M, cfg.penalty, cfg.lumped,
                                  cfg.eps_rel, 0.0, cfg.max_iter)
    res = minimal_time_search(template, (cfg.t_lo, cfg.t_hi), cfg.tol)
    path = write_control_csv(out / "control.csv", res.control, mesh)
    diag = _diagnostics(cfg, params, mesh, assembly, [res.t_min_estimate])
    report = {
        "command": "mintime", "case": cfg.case, "s": cfg.s, "T": res.t_min_estimate,
        "t_min_estimate": res.t_min_estimate, "bracket": list(res.bracket), "misfit": res.misfit,
        "eps_rel": cfg.eps_rel, "iterations": None,
        "trace": [{"T": T, "misfit": m, "feasible": f} for T, m, f in res.trace],
        "eta": diag["eta"], "ratios": diag["ratios"], "note": TARGET_NOTE, "config": cfg.echo(),
    }
    return _finish(out, report, [path])


def cmd_diagnose(cfg: ExperimentConfig, out: Path) -> dict:
    params, mesh, assembly = _setup(cfg)
    diag = _diagnostics(cfg, params, mesh, assembly, cfg.sweep())
    report = {"command": "diagnose", "s": cfg.s, "seed": cfg.seed, "controllable": params.controllable,
              **diag, "config": cfg.echo()}
    return _finish(out, report, [])


COMMANDS = {"eig": cmd_eig, "solve": cmd_solve, "control": cmd_control,
            "mintime": cmd_mintime, "diagnose": cmd_diagnose}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracheat", description="Exterior control of the fractional heat equation.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="flat key = value file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--case", type=int, choices=(1, 2))
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.case)
        args.out.mkdir(parents=True, exist_ok=True)
        report = COMMANDS[args.command](cfg, args.out)
    except BracketError as exc:
        print(f"bracket error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FracHeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    print(f"{args.command}: wrote {args.out / 'report.json'} ({', '.join(report['files']) or 'no csv'})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
