"""Time grid and space-time control container shared by the solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int = 300

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"step count must be a positive integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return self.T * np.arange(self.M + 1) / self.M


@dataclass(frozen=True)
class ControlGrid:
    """Control values g(x_i, t_k) on control nodes (rows) by time levels t_0..t_M (columns).

    Backward Euler uses column k on the step (t_{k-1}, t_k], so the control is
    piecewise constant in time; column 0 only sets the exterior value at t=0.
    """

    values: np.ndarray
    grid: TimeGrid
    nonneg: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.M + 1:
            raise ConfigurationError(f"control values must have shape (n_ctrl, {self.grid.M + 1}), got {v.shape}")
        if self.nonneg and v.min(initial=0.0) < 0.0:
            raise DomainError("nonnegative control grid has a negative entry")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n_ctrl: int, grid: TimeGrid, nonneg: bool = True) -> "ControlGrid":
        return cls(np.zeros((n_ctrl, grid.M + 1)), grid, nonneg)

    @classmethod
    def from_function(cls, func, points, grid: TimeGrid, nonneg: bool = False) -> "ControlGrid":
        X, Tm = np.meshgrid(points, grid.times, indexing="ij")
        return cls(np.broadcast_to(func(X, Tm), X.shape), grid, nonneg)

    @property
    def n_ctrl(self) -> int:
        return self.values.shape[0]

    def sup_norm(self) -> float:
        return float(np.abs(self.values[:, 1:]).max(initial=0.0))

    def resample(self, grid: TimeGrid) -> "ControlGrid":
        """Piecewise-constant rescaling of the step values onto a grid of a different horizon."""
        old = self.values
        # step k of the new grid takes the old step covering the same fraction of the horizon
        frac = (np.arange(1, grid.M + 1) - 0.5) / grid.M
        src = np.clip(np.ceil(frac * self.grid.M).astype(int), 1, self.grid.M)
        new = np.empty((old.shape[0], grid.M + 1))
        new[:, 0] = old[:, 0]
        new[:, 1:] = old[:, src]
        return ControlGrid(new, grid, self.nonneg)

    def extend(self, grid: TimeGrid, fill) -> "ControlGrid":
        """Keep the steps of ``self`` on (0, T] and use ``fill`` (per node) on (T, T'].

        ``grid`` must share the step size and have a horizon at least as long.
        """
        M_old = self.grid.M
        if grid.M < M_old or not np.isclose(grid.dt, self.grid.dt, rtol=1e-12):
            raise ConfigurationError("extension grid must keep the step size and not shorten the horizon")
        new = np.empty((self.n_ctrl, grid.M + 1))
        new[:, : M_old + 1] = self.values
        new[:, M_old + 1:] = np.broadcast_to(np.asarray(fill, dtype=float).reshape(-1, 1),
                                             (self.n_ctrl, grid.M - M_old))
        return ControlGrid(new, grid, self.nonneg)
