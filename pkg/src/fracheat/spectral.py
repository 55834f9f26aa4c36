"""Discrete Dirichlet eigenpairs and Duhamel-series solvers.

Sign convention: with the nonlocal normal derivative N_s u(x) = C_s int (u(x)-u(y))/|x-y|^{1+2s} dy
the modal coefficients of the exterior-controlled state obey

    u_n(t) = u0_n e^{-lambda_n t} - int_0^t (g(., tau), N_s phi_n)_{L2(O)} e^{-lambda_n (t - tau)} dtau,

which is what integration by parts gives and what makes nonnegative exterior data
raise the state.  The dual identity reads
(u0, psi(0)) - (u(T), psi_T) = int_0^T (g, N_s psi)_{L2(O)}.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DomainError, NumericalError
from .fem import Mesh1D, NonlocalAssembly, normal_derivative_matrix
from .grids import ControlGrid
from .special import FracParams

DEFAULT_MODES = 40


@dataclass(frozen=True)
class EigenBasis:
    """Mass-orthonormal eigenpairs on the interior hats.

    ``modes`` has one column per eigenvector (rows follow ``mesh.interior_ids``).
    ``normal_traces[:, k]`` samples N_s phi_k at the control nodes and
    ``control_loads[:, k]`` holds int phi_c N_s phi_k for each control hat phi_c,
    the exact pairing of a P1 control field with N_s phi_k.
    """

    lambdas: np.ndarray
    modes: np.ndarray
    normal_traces: np.ndarray
    control_loads: np.ndarray
    mass: np.ndarray
    mesh: Mesh1D
    params: FracParams

    @property
    def K(self) -> int:
        return self.lambdas.size

    @property
    def control_weights(self) -> np.ndarray:
        """Trapezoid weights of the P1 control field over O (zero at the neighbours outside O)."""
        return np.full(self.mesh.control_ids.size, self.mesh.h)

    def project(self, interior_values) -> np.ndarray:
        return self.modes.T @ (self.mass @ np.asarray(interior_values, dtype=float))

    def reconstruct(self, coeffs) -> np.ndarray:
        return self.modes @ np.asarray(coeffs, dtype=float)

    def l1_normal_traces(self) -> np.ndarray:
        return self.control_weights @ np.abs(self.normal_traces)

    def eta(self, k_max: int = 20) -> float:
        """min_k ||N_s phi_k||_{L1(O)} over the first ``k_max`` modes."""
        return float(self.l1_normal_traces()[:k_max].min())

    def pairing(self, g_values) -> np.ndarray:
        """(g, N_s phi_n)_{L2(O)} for each mode; ``g_values`` has control nodes along axis 0."""
        return self.control_loads.T @ np.asarray(g_values, dtype=float)


@dataclass(frozen=True)
class SpectralState:
    coeffs: np.ndarray
    time: float

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def compute_eigenbasis(assembly: NonlocalAssembly, mesh: Mesh1D, params: FracParams,
                       K: int | None = None, residual_tol: float = 1e-8) -> EigenBasis:
    """Solve A_int v = lambda M_int v and attach normal traces at the control nodes."""
    ids = mesh.interior_ids
    n_int = ids.size
    K = min(DEFAULT_MODES, n_int) if K is None else int(K)
    if not 1 <= K <= n_int:
        raise ConfigurationError(f"mode count must be in [1, {n_int}], got {K}")
    A = assembly.stiffness[np.ix_(ids, ids)]
    M = assembly.mass[np.ix_(ids, ids)]
    try:
        lam, vec = linalg.eigh(A, M, subset_by_index=[0, K - 1])
    except linalg.LinAlgError as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc

    # deterministic signs: largest-magnitude entry positive
    pick = np.argmax(np.abs(vec), axis=0)
    vec = vec * np.sign(vec[pick, np.arange(K)])

    res = np.linalg.norm(A @ vec - (M @ vec) * lam, axis=0) / np.linalg.norm(vec, axis=0)
    scale = np.maximum(1.0, np.abs(lam))
    if np.any(res > residual_tol * scale):
        raise NumericalError(f"eigenpair residuals too large: max {res.max():.3e}")

    ctrl = mesh.control_ids
    traces = normal_derivative_matrix(mesh, params, mesh.nodes[ctrl]) @ vec
    loads = assembly.stiffness[np.ix_(ctrl, ids)] @ vec
    return EigenBasis(lam, vec, traces, loads, M, mesh, params)


def _step_kernel(lam: np.ndarray, t: float, a: float, b: float) -> np.ndarray:
    """int_a^b e^{-lam (t - tau)} dtau for a <= b <= t."""
    return -np.exp(-lam * (t - b)) * np.expm1(-lam * (b - a)) / lam


def forward_series(basis: EigenBasis, u0, g: ControlGrid | None, t: float) -> SpectralState:
    """Modal solution at time ``t``; ``u0`` is given on the interior nodes.

    The control is piecewise constant on the steps of its grid and the time
    convolution is integrated exactly step by step.
    """
    lam = basis.lambdas
    c = basis.project(u0) * np.exp(-lam * t)
    if g is None:
        if t < 0:
            raise DomainError("time must be nonnegative")
        return SpectralState(c, t)
    times = g.grid.times
    if t < 0 or t > g.grid.T * (1 + 1e-12):
        raise DomainError(f"time {t} outside [0, {g.grid.T}]")
    pair = basis.pairing(g.values[:, 1:])  # (K, M)
    a = times[:-1]
    b = np.minimum(times[1:], t)
    active = b > a
    if np.any(active):
        ker = _step_kernel(lam[:, None], t, a[None, active], b[None, active])
        c = c - np.sum(pair[:, active] * ker, axis=1)
    return SpectralState(c, t)


def forward_series_trajectory(basis: EigenBasis, u0, g: ControlGrid) -> np.ndarray:
    """Coefficients at every level of ``g.grid`` (shape (M+1, K)), marched exactly step by step."""
    lam = basis.lambdas
    dt = g.grid.dt
    decay = np.exp(-lam * dt)
    gain = -np.expm1(-lam * dt) / lam
    pair = basis.pairing(g.values[:, 1:])
    out = np.empty((g.grid.M + 1, lam.size))
    out[0] = basis.project(u0)
    for k in range(1, g.grid.M + 1):
        out[k] = out[k - 1] * decay - gain * pair[:, k - 1]
    return out


def adjoint_series(basis: EigenBasis, psi_T, T: float, t: float):
    """Backward solution psi(., t) and its normal trace at the control nodes."""
    if t > T or t < 0:
        raise DomainError(f"time {t} outside [0, {T}]")
    c = basis.project(psi_T) * np.exp(-basis.lambdas * (T - t))
    return SpectralState(c, t), basis.normal_traces @ c


def write_eigen_csv(path, basis: EigenBasis) -> Path:
    path = Path(path)
    l1 = basis.l1_normal_traces()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda_k", "l1_normal_trace_k"])
        for k in range(basis.K):
            w.writerow([k + 1, f"{basis.lambdas[k]:.17g}", f"{l1[k]:.17g}"])
    return path
