"""Exception hierarchy shared by the solver modules."""


class FracHeatError(Exception):
    """Base class for all package errors."""


class DomainError(FracHeatError, ValueError):
    """An argument lies outside the domain of a formula or operator."""


class ConfigurationError(FracHeatError, ValueError):
    """Inconsistent or invalid problem configuration."""


class NumericalError(FracHeatError, RuntimeError):
    """A linear-algebra or eigen solve failed its residual check."""


class AssemblyError(NumericalError):
    """Quadrature for an element pair did not reach the requested accuracy."""


class BracketError(FracHeatError, ValueError):
    """A bisection bracket does not straddle the feasibility threshold."""
