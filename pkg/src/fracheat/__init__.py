"""Exterior control of the one-dimensional fractional heat equation."""
from .errors import (AssemblyError, BracketError, ConfigurationError, DomainError, FracHeatError,
                     NumericalError)
from .special import FracParams, eigenvalue_asymptotic, exact_solution, normalization_constant
from .fem import Mesh1D, NonlocalAssembly, assemble, build_mesh
from .grids import ControlGrid, TimeGrid
from .spectral import EigenBasis, compute_eigenbasis, forward_series
from .timestep import RobinStepper, robin_adjoint, robin_forward
from .control import (ControlProblem, MinTimeResult, build_case_problem, minimal_time_search,
                      observability_diagnostics, projected_gradient_solve, tracking_cost,
                      tracking_gradient)

__all__ = [
    "AssemblyError", "BracketError", "ConfigurationError", "DomainError", "FracHeatError", "NumericalError",
    "FracParams", "eigenvalue_asymptotic", "exact_solution", "normalization_constant",
    "Mesh1D", "NonlocalAssembly", "assemble", "build_mesh", "ControlGrid", "TimeGrid",
    "EigenBasis", "compute_eigenbasis", "forward_series", "RobinStepper", "robin_adjoint", "robin_forward",
    "ControlProblem", "MinTimeResult", "build_case_problem", "minimal_time_search",
    "observability_diagnostics", "projected_gradient_solve", "tracking_cost", "tracking_gradient",
]
