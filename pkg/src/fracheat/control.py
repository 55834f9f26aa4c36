"""Constrained exterior control: tracking cost, adjoint gradient, projected descent,
minimal-time bisection, delayed controls and observability diagnostics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .errors import BracketError, ConfigurationError, DomainError
from .fem import Mesh1D, NonlocalAssembly
from .grids import ControlGrid, TimeGrid
from .special import exact_solution
from .spectral import EigenBasis
from .timestep import DEFAULT_PENALTY, RobinStepper, initial_nodal

ARMIJO_C = 1e-4
PG_TOL = 1e-9
MAX_HALVINGS = 60
DEFAULT_EPS_REL = 1e-3

CASE_AMPLITUDES = {1: 0.5, 2: 1.8}


def case_initial(case: int):
    """Initial datum amp*cos(pi x/2) for the two reference scenarios."""
    if case not in CASE_AMPLITUDES:
        raise ConfigurationError(f"case must be 1 or 2, got {case}")
    amp = CASE_AMPLITUDES[case]
    return lambda x: amp * np.cos(0.5 * np.pi * x)


@dataclass(frozen=True)
class ControlProblem:
    """Drive ``u0`` to ``target`` at the end of ``stepper.grid`` with control >= ``bound``.

    ``u0`` and ``target`` are full nodal vectors.  ``active_from`` switches the
    control off on every step ending at or before that time.
    """

    stepper: RobinStepper
    u0: np.ndarray
    target: np.ndarray
    eps: float
    bound: float = 0.0
    g_ref: ControlGrid | None = None
    max_iter: int = 400
    active_from: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"feasibility tolerance must be positive, got {self.eps}")
        if self.bound > 0:
            raise ConfigurationError(f"lower bound must be <= 0, got {self.bound}")
        if self.max_iter < 0:
            raise ConfigurationError("iteration budget must be nonnegative")
        n = self.stepper.mesh.num_nodes
        for name in ("u0", "target"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise ConfigurationError(f"{name} must be a nodal vector of length {n}")
            object.__setattr__(self, name, v)

    @property
    def grid(self) -> TimeGrid:
        return self.stepper.grid

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def n_ctrl(self) -> int:
        return self.stepper.mesh.control_ids.size

    @property
    def active_mask(self) -> np.ndarray:
        """Boolean mask over time columns where the control may be nonzero."""
        mask = self.grid.times > self.active_from + 1e-12 * self.T
        mask[0] = False
        return mask

    def target_norm(self) -> float:
        return math.sqrt(self.stepper.inner(self.target, self.target))

    def project(self, values: np.ndarray) -> np.ndarray:
        out = np.maximum(values, self.bound) if np.isfinite(self.bound) else np.array(values, dtype=float)
        out[:, ~self.active_mask] = 0.0
        return out

    def with_horizon(self, T: float, target=None) -> "ControlProblem":
        """Same data on a new horizon with the same step count."""
        st = self.stepper
        new = RobinStepper(st.assembly, st.mesh, TimeGrid(T, st.grid.M), st.penalty, st.lumped)
        return replace(self, stepper=new, target=self.target if target is None else target)


def build_case_problem(case: int, T: float, mesh: Mesh1D, assembly: NonlocalAssembly, M: int = 300,
                       penalty_n: float = DEFAULT_PENALTY, lumped: bool = True,
                       eps_rel: float = DEFAULT_EPS_REL, bound: float = 0.0,
                       max_iter: int = 400) -> ControlProblem:
    """Reference scenario: cosine start, closed-form Dirichlet profile as target, zero reference datum."""
    stepper = RobinStepper(assembly, mesh, TimeGrid(T, M), penalty_n, lumped)
    u0 = initial_nodal(mesh, case_initial(case))
    target = _case_target(mesh, T, assembly.s)
    norm = math.sqrt(stepper.inner(target, target))
    return ControlProblem(stepper, u0, target, eps_rel * norm, bound, None, max_iter)


def _case_target(mesh: Mesh1D, T: float, s: float) -> np.ndarray:
    return exact_solution(mesh.nodes, T, s)


def _values(problem: ControlProblem, g) -> np.ndarray:
    vals = g.values if isinstance(g, ControlGrid) else np.asarray(g, dtype=float)
    if vals.shape != (problem.n_ctrl, problem.grid.M + 1):
        raise ConfigurationError(f"control shape {vals.shape} does not match the problem")
    if np.isfinite(problem.bound) and vals.min(initial=0.0) < problem.bound:
        raise DomainError(f"control violates the lower bound {problem.bound}")
    return vals


def _residual(problem: ControlProblem, vals: np.ndarray) -> np.ndarray:
    return problem.stepper.final_state(problem.u0, vals) - problem.target


def tracking_cost(problem: ControlProblem, g) -> float:
    """||u(T) - target||^2 in L2(-1, 1)."""
    r = _residual(problem, _values(problem, g))
    return problem.stepper.inner(r, r)


def _cost_and_gradient(problem: ControlProblem, vals: np.ndarray) -> tuple[float, np.ndarray]:
    st = problem.stepper
    r = _residual(problem, vals)
    cost = st.inner(r, r)
    grad = st.control_gradient(st.adjoint(2.0 * r))
    return cost, grad


def tracking_gradient(problem: ControlProblem, g) -> np.ndarray:
    """Exact discrete gradient of :func:`tracking_cost`, shape (n_ctrl, M+1)."""
    return _cost_and_gradient(problem, _values(problem, g))[1]


@dataclass(frozen=True)
class SolveResult:
    control: ControlGrid
    misfit: float
    iterations: int
    converged: bool
    status: str
    cost_history: np.ndarray = field(repr=False)

    def __iter__(self):
        # allows ``g, misfit, iters = projected_gradient_solve(...)``
        return iter((self.control, self.misfit, self.iterations))


def projected_gradient_solve(problem: ControlProblem, g0=None, max_iter: int | None = None) -> SolveResult:
    """Projected gradient descent with Armijo backtracking and Barzilai-Borwein trial steps.

    Stops on misfit <= eps, projected-gradient norm <= 1e-9, or budget
    exhaustion; the last two return ``converged=False``.
    """
    budget = problem.max_iter if max_iter is None else int(max_iter)
    nonneg = problem.bound >= 0
    if g0 is None:
        g = problem.project(np.zeros((problem.n_ctrl, problem.grid.M + 1)))
    else:
        g0v = g0.values if isinstance(g0, ControlGrid) else np.asarray(g0, dtype=float)
        g = problem.project(g0v)
    cost, grad = _cost_and_gradient(problem, g)
    history = [cost]
    eps2 = problem.eps ** 2
    step = None
    status = "budget"
    it = 0
    while True:
        if cost <= eps2:
            status = "feasible"
            break
        pg = g - problem.project(g - grad)
        if np.linalg.norm(pg) <= PG_TOL:
            status = "stationary"
            break
        if it >= budget:
            break
        if step is None:
            gn = np.linalg.norm(grad)
            step = max(np.linalg.norm(g), 1.0) / gn
        t = step
        for _ in range(MAX_HALVINGS):
            trial = problem.project(g - t * grad)
            d = trial - g
            trial_cost, trial_grad = _cost_and_gradient(problem, trial)
            if trial_cost <= cost + ARMIJO_C * float(np.sum(grad * d)):
                break
            t *= 0.5
        else:
            status = "stationary"
            break
        it += 1
        y = trial_grad - grad
        sy = float(np.sum(d * y))
        # Barzilai-Borwein trial step for the next iteration
        step = float(np.sum(d * d)) / sy if sy > 0 else 2.0 * t
        g, cost, grad = trial, trial_cost, trial_grad
        history.append(cost)
    misfit = math.sqrt(max(cost, 0.0))
    return SolveResult(ControlGrid(g, problem.grid, nonneg), misfit, it, status == "feasible", status,
                       np.array(history))


@dataclass(frozen=True)
class MinTimeResult:
    t_min_estimate: float
    bracket: tuple[float, float]
    trace: tuple[tuple[float, float, bool], ...]
    control: ControlGrid | None = None
    misfit: float = float("nan")

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo < self.t_min_estimate <= hi:
            raise ConfigurationError("estimate must lie in (t_lo, t_hi]")


def minimal_time_search(template: ControlProblem, bracket: tuple[float, float], tol: float = 0.01,
                        target_fn=None) -> MinTimeResult:
    """Bisection on the horizon; each probe is a projected-gradient solve.

    ``target_fn(T)`` returns the nodal target for horizon ``T``; by default the
    closed-form Dirichlet profile.  The relative tolerance of ``template`` is
    kept, i.e. eps(T) = eps_template * ||target(T)|| / ||target_template||.
    """
    t_lo, t_hi = map(float, bracket)
    if not 0 < t_lo < t_hi:
        raise BracketError(f"bracket must satisfy 0 < t_lo < t_hi, got {bracket}")
    if not tol > 0:
        raise ConfigurationError("bisection tolerance must be positive")
    s = template.stepper.assembly.s
    mesh = template.stepper.mesh
    if target_fn is None:
        target_fn = lambda T: _case_target(mesh, T, s)  # noqa: E731
    eps_rel = template.eps / template.target_norm()
    trace: list[tuple[float, float, bool]] = []

    def probe(T, warm):
        tgt = target_fn(T)
        prob = template.with_horizon(T, tgt)
        prob = replace(prob, eps=eps_rel * prob.target_norm())
        res = projected_gradient_solve(prob, None if warm is None else warm.resample(prob.grid))
        trace.append((T, res.misfit, res.converged))
        return res

    hi_res = probe(t_hi, None)
    if not hi_res.converged:
        raise BracketError(f"infeasible at t_hi={t_hi} (misfit {hi_res.misfit:.3e})")
    lo_res = probe(t_lo, hi_res.control)
    if lo_res.converged:
        raise BracketError(f"already feasible at t_lo={t_lo} (misfit {lo_res.misfit:.3e})")
    best = hi_res
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        res = probe(mid, best.control)
        if res.converged:
            t_hi, best = mid, res
        else:
            t_lo = mid
    return MinTimeResult(t_hi, (t_lo, t_hi), tuple(trace), best.control, best.misfit)


def delayed_control_construction(problem: ControlProblem, T: float | None = None,
                                 t0: float | None = None) -> tuple[ControlGrid, float]:
    """Shifted control supported on (t0, T] for the problem as given.

    ``problem`` is expected in shifted form (state minus reference, target zero,
    bound -alpha); ``t0`` defaults to T/2.
    """
    if T is not None and not np.isclose(T, problem.T):
        problem = problem.with_horizon(T)
    T = problem.T
    t0 = 0.5 * T if t0 is None else float(t0)
    if not 0 < t0 < T:
        raise ConfigurationError(f"activation time must satisfy 0 < t0 < T, got t0={t0}, T={T}")
    res = projected_gradient_solve(replace(problem, active_from=t0))
    return res.control, res.control.sup_norm()


@dataclass(frozen=True)
class ObservabilityReport:
    eta: float
    ingham_ratio: float
    obs_ratio: float
    gap: float
    T: float

    def to_dict(self) -> dict:
        return {"eta": self.eta, "ingham_ratio": self.ingham_ratio, "obs_ratio": self.obs_ratio,
                "gap": self.gap, "T": self.T}


def observability_diagnostics(basis: EigenBasis, T: float, ensemble: int = 200, seed: int = 0,
                              K: int = 20, n_time: int = 4001) -> ObservabilityReport:
    """Seeded Monte Carlo estimates of the Ingham and observability ratios at horizon ``T``.

    Coefficients are standard normal on the first ``K`` modes; time integrals
    use the trapezoid rule on ``n_time`` points, space integrals over O the
    nodal weights h.
    """
    if K < 10 or K > basis.K:
        raise ConfigurationError(f"need 10 <= K <= {basis.K}, got {K}")
    if ensemble < 50:
        raise ConfigurationError(f"ensemble must have at least 50 members, got {ensemble}")
    if not T > 0:
        raise ConfigurationError("horizon must be positive")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((ensemble, K))
    if np.any(np.all(coeffs == 0, axis=1)):
        raise ConfigurationError("degenerate ensemble member")
    lam = basis.lambdas[:K]
    t = np.linspace(0.0, T, n_time)
    decay = np.exp(-np.outer(t, lam))                      # (n_time, K)

    # Ingham: sum |c_n| e^{-lam_n T} / ||sum c_n e^{-lam_n t}||_{L1(0,T)}
    series = coeffs @ decay.T                              # (ensemble, n_time)
    l1 = trapezoid(np.abs(series), t, axis=1)
    num = np.abs(coeffs) @ np.exp(-lam * T)
    ingham = float(np.max(num / l1))

    # observability: psi(t) = sum c_n e^{-lam_n (T - t)} phi_n, so its trace over (0,T)
    # sweeps the same exponentials reversed in time
    traces = basis.normal_traces[:, :K]                    # (n_ctrl, K)
    w = basis.control_weights
    space_l1 = np.einsum("c,ect->et", w, np.abs(np.einsum("ck,ek,tk->ect", traces, coeffs, decay)))
    denom = trapezoid(space_l1, t, axis=1) ** 2
    psi0 = np.sum((coeffs * np.exp(-lam * T)) ** 2, axis=1)
    obs = float(np.max(psi0 / denom))
    gap = float(np.min(np.diff(basis.lambdas[:K])))
    return ObservabilityReport(basis.eta(K), ingham, obs, gap, float(T))


def write_control_csv(path, g: ControlGrid, mesh: Mesh1D) -> Path:
    import csv

    path = Path(path)
    x = mesh.nodes[mesh.control_ids]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "g"])
        for k, t in enumerate(g.grid.times):
            for i, xi in enumerate(x):
                w.writerow([f"{t:.17g}", f"{xi:.17g}", f"{g.values[i, k]:.17g}"])
    return path


def read_control_csv(path, mesh: Mesh1D, grid: TimeGrid) -> ControlGrid:
    """Inverse of :func:`write_control_csv` on a matching mesh and time grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_c = mesh.control_ids.size
    if data.shape != ((grid.M + 1) * n_c, 3):
        raise ConfigurationError(f"control file {path} does not match the mesh and time grid")
    if not np.allclose(data[:n_c, 1], mesh.nodes[mesh.control_ids], rtol=0, atol=1e-12):
        raise ConfigurationError(f"control file {path} uses different control nodes")
    if not np.allclose(data[::n_c, 0], grid.times, rtol=1e-12, atol=1e-14):
        raise ConfigurationError(f"control file {path} uses a different time grid")
    return ControlGrid(data[:, 2].reshape(grid.M + 1, n_c).T, grid)


def dump_report(path, report: dict) -> Path:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    path = Path(path)
    path.write_text(json.dumps(_round17(report), sort_keys=True, indent=2) + "\n")
    return path


def _round17(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {str(k): _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round17(obj.item())
    return obj
