"""Backward Euler for the Robin-penalized exterior problem and its discrete adjoint.

Each step solves

    (M_in/dt + A + n R) u^k = (M_in/dt) u^{k-1} + n R g^k + b^k

on the free nodes of the box, where M_in is the mass over (-1, 1), R the mass
over the exterior part of the box (kappa = 1), g^k the control injected at
the control nodes and b^k an optional source load.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .errors import ConfigurationError, NumericalError
from .fem import Mesh1D, NonlocalAssembly
from .grids import ControlGrid, TimeGrid

DEFAULT_PENALTY = 1e9


@dataclass(frozen=True)
class Trajectory:
    """Nodal snapshots on all box nodes, one row per time level."""

    snapshots: np.ndarray
    grid: TimeGrid

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def initial_nodal(mesh: Mesh1D, func) -> np.ndarray:
    """Nodal values of ``func`` inside (-1, 1), zero elsewhere."""
    x = mesh.nodes
    return np.where(np.abs(x) < 1.0, func(x), 0.0)


def source_load(mesh: Mesh1D, func, t: float, order: int = 8) -> np.ndarray:
    """Load vector int_{-1}^{1} f(x, t) phi_i(x) dx by Gauss rules on each interior cell piece."""
    g, w = leggauss(order)
    load = np.zeros(mesh.num_nodes)
    for e in range(mesh.num_elements):
        xl, xr = mesh.nodes[e], mesh.nodes[e + 1]
        lo, hi = max(xl, -1.0), min(xr, 1.0)
        if hi <= lo:
            continue
        x = 0.5 * (hi - lo) * g + 0.5 * (hi + lo)
        fw = func(x, t) * w * 0.5 * (hi - lo)
        r = (x - xl) / mesh.h
        load[e] += np.sum(fw * (1.0 - r))
        load[e + 1] += np.sum(fw * r)
    return load


class RobinStepper:
    """Factorized backward-Euler step map on a fixed mesh, time grid and penalty."""

    def __init__(self, assembly: NonlocalAssembly, mesh: Mesh1D, grid: TimeGrid,
                 penalty_n: float = DEFAULT_PENALTY, lumped: bool = False):
        if not penalty_n > 0:
            raise ConfigurationError(f"penalty must be positive, got {penalty_n}")
        n_nodes = mesh.num_nodes
        if assembly.stiffness.shape != (n_nodes, n_nodes):
            raise ConfigurationError("assembly does not match the mesh")
        self.assembly = assembly
        self.mesh = mesh
        self.grid = grid
        self.penalty = float(penalty_n)
        self.lumped = lumped
        f = mesh.free_ids
        self.free = f
        dt = grid.dt
        m_in = assembly.interior_mass(lumped)
        r_ex = assembly.exterior_mass(lumped)
        self.mass_in = m_in                       # full-node interior mass, used for norms
        self._m_dt = m_in[np.ix_(f, f)] / dt
        self._mf = m_in[np.ix_(f, f)]
        system = self._m_dt + assembly.stiffness[np.ix_(f, f)] + self.penalty * r_ex[np.ix_(f, f)]
        self.system = system
        try:
            self._chol = linalg.cho_factor(system, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"step matrix is not positive definite: {exc}") from exc
        # injection of control-node values into the free-node right-hand side
        self._inject = self.penalty * r_ex[np.ix_(f, mesh.control_ids)]
        self._prop = None

    # -- helpers ----------------------------------------------------------

    def _solve(self, rhs):
        return linalg.cho_solve(self._chol, rhs, check_finite=False)

    @property
    def propagators(self) -> tuple[np.ndarray, np.ndarray]:
        """(L^{-1} M_in/dt, L^{-1} n R[free, ctrl]); cached, used by the optimizer sweeps."""
        if self._prop is None:
            self._prop = (self._solve(self._m_dt), self._solve(self._inject))
        return self._prop

    def _embed(self, free_vals) -> np.ndarray:
        out = np.zeros(self.mesh.num_nodes)
        out[self.free] = free_vals
        return out

    def _check_control(self, g: ControlGrid | None) -> np.ndarray:
        M = self.grid.M
        n_c = self.mesh.control_ids.size
        if g is None:
            return np.zeros((n_c, M + 1))
        if g.values.shape != (n_c, M + 1):
            raise ConfigurationError(f"control shape {g.values.shape} does not match ({n_c}, {M + 1})")
        return g.values

    def initial_state(self, u0, g0=None) -> np.ndarray:
        """Full nodal start vector; ``u0`` may be given on interior ids or on all nodes."""
        u0 = np.asarray(u0, dtype=float)
        mesh = self.mesh
        if u0.shape == (mesh.num_nodes,):
            full = u0.copy()
        elif u0.shape == (mesh.interior_ids.size,):
            full = np.zeros(mesh.num_nodes)
            full[mesh.interior_ids] = u0
        else:
            raise ConfigurationError(f"initial datum has shape {u0.shape}")
        full[mesh.control_ids] = 0.0 if g0 is None else g0
        full[[0, -1]] = 0.0
        return full

    # -- forward / adjoint ------------------------------------------------

    def forward(self, u0, g: ControlGrid | None = None, source=None) -> Trajectory:
        """March the Robin problem; ``source(x, t)`` is integrated over (-1, 1)."""
        vals = self._check_control(g)
        M = self.grid.M
        times = self.grid.times
        f = self.free
        out = np.zeros((M + 1, self.mesh.num_nodes))
        out[0] = self.initial_state(u0, vals[:, 0])
        forcing = self._inject @ vals[:, 1:]
        u = out[0][f]
        for k in range(1, M + 1):
            rhs = self._m_dt @ u + forcing[:, k - 1]
            if source is not None:
                rhs = rhs + source_load(self.mesh, source, times[k])[f]
            u = self._solve(rhs)
            out[k, f] = u
        return Trajectory(out, self.grid)

    def final_state(self, u0, g_values: np.ndarray) -> np.ndarray:
        """Terminal free-node state only; ``g_values`` is the raw (n_ctrl, M+1) array."""
        step, gain = self.propagators
        forcing = gain @ g_values[:, 1:]
        u = self.initial_state(u0, g_values[:, 0])[self.free]
        for k in range(self.grid.M):
            u = step @ u + forcing[:, k]
        return self._embed(u)

    def adjoint(self, psi_T) -> Trajectory:
        """Discrete adjoint p^M = psi_T, p^{k-1} = L^{-1} (M_in/dt) p^k, zero exterior data.

        With this indexing the pairing identity is
        <u^M, psi_T>_{M_in} - <u^0, p^0>_{M_in} = sum_k dt (n R g^k + b^k)^T p^{k-1}.
        """
        psi_T = np.asarray(psi_T, dtype=float)
        if psi_T.shape != (self.mesh.num_nodes,):
            raise ConfigurationError("adjoint terminal datum must be a full nodal vector")
        M = self.grid.M
        f = self.free
        out = np.zeros((M + 1, self.mesh.num_nodes))
        out[M] = psi_T
        out[M, [0, -1]] = 0.0
        p = out[M][f]
        step = self.propagators[0]
        for k in range(M, 0, -1):
            p = step @ p
            out[k - 1, f] = p
        return Trajectory(out, self.grid)

    def control_gradient(self, adj: Trajectory) -> np.ndarray:
        """Transpose of the control injection applied to an adjoint trajectory."""
        grad = np.zeros((self.mesh.control_ids.size, self.grid.M + 1))
        grad[:, 1:] = self.grid.dt * self._inject.T @ adj.snapshots[:-1, self.free].T
        return grad

    def control_pairing(self, g: ControlGrid, adj: Trajectory) -> float:
        return float(np.sum(self.control_gradient(adj) * g.values))

    def inner(self, u, v) -> float:
        """L2(-1, 1) inner product of two full nodal vectors."""
        return float(u @ self.mass_in @ v)


def robin_forward(assembly, mesh, grid, penalty_n, u0, g=None, source=None, lumped=False) -> Trajectory:
    return RobinStepper(assembly, mesh, grid, penalty_n, lumped).forward(u0, g, source)


def robin_adjoint(assembly, mesh, grid, penalty_n, psi_T, lumped=False) -> Trajectory:
    return RobinStepper(assembly, mesh, grid, penalty_n, lumped).adjoint(psi_T)


def space_time_l2(traj_values: np.ndarray, reference: np.ndarray, mass: np.ndarray, dt: float) -> float:
    """Discrete L2((0,T); L2(-1,1)) distance, rectangle rule over levels 1..M."""
    diff = traj_values[1:] - reference[1:]
    per_step = np.einsum("ki,ij,kj->k", diff, mass, diff)
    return float(np.sqrt(dt * per_step.sum()))


@dataclass(frozen=True)
class ConvergenceStudy:
    penalties: np.ndarray
    errors: np.ndarray
    slope: float


def robin_convergence_study(basis, assembly, mesh, grid: TimeGrid, penalties, u0, g: ControlGrid,
                            lumped: bool = False) -> ConvergenceStudy:
    """Space-time L2 error of the Robin solve against the spectral Dirichlet reference.

    The reference is evaluated at the same time levels from the exact modal
    Duhamel series; the rate is the least-squares slope of log-error vs log-n.
    """
    from .spectral import forward_series_trajectory

    pen = np.asarray(penalties, dtype=float)
    if pen.size < 3:
        raise ConfigurationError("need at least three penalties")
    if np.any(np.diff(pen) <= 0):
        raise ConfigurationError("penalties must be strictly ascending")
    ids = mesh.interior_ids
    u0 = np.asarray(u0, dtype=float)
    u0_int = u0[ids] if u0.shape == (mesh.num_nodes,) else u0
    coeffs = forward_series_trajectory(basis, u0_int, g)
    ref = np.zeros((grid.M + 1, mesh.num_nodes))
    ref[:, ids] = coeffs @ basis.modes.T
    mass = assembly.mass_interior
    errors = []
    for n in pen:
        traj = RobinStepper(assembly, mesh, grid, n, lumped).forward(u0, g)
        errors.append(space_time_l2(traj.snapshots, ref, mass, grid.dt))
    errors = np.array(errors)
    slope = float(np.polyfit(np.log(pen), np.log(errors), 1)[0])
    return ConvergenceStudy(pen, errors, slope)


@dataclass(frozen=True)
class ComparisonResult:
    ordered: bool
    worst_violation: float


def comparison_check(upper: Trajectory, lower: Trajectory, tol: float = 1e-10) -> ComparisonResult:
    """Check upper >= lower at every node and level; worst violation is min(upper - lower)."""
    worst = float(np.min(upper.snapshots - lower.snapshots))
    return ComparisonResult(worst >= -tol, worst)


def write_trajectory_csv(path, traj: Trajectory, mesh: Mesh1D) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        for t, row in zip(traj.grid.times, traj.snapshots):
            for x, u in zip(mesh.nodes, row):
                w.writerow([f"{t:.17g}", f"{x:.17g}", f"{u:.17g}"])
    return path
