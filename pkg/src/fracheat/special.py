"""Closed-form scalar kernels for the 1-D fractional Laplacian on (-1, 1).

These are cheap pure functions of floats (or arrays) and serve as oracles
for the discrete machinery in the other modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

DOMAIN = (-1.0, 1.0)
BOX = (-2.0, 2.0)


def normalization_constant(s: float) -> float:
    """Constant C_s making the singular integral agree with |xi|^{2s}.

    C_s = s 4^s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s)).
    """
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s!r}")
    return s * 2.0 ** (2 * s) * math.gamma(s + 0.5) / (math.sqrt(math.pi) * math.gamma(1.0 - s))


def eigenvalue_asymptotic(n, s: float):
    """Leading-order Dirichlet eigenvalue of (-d^2/dx^2)^s on (-1, 1).

    Returns (n pi/2 - (1 - s) pi/4)^{2s}; the O(1/n) correction is dropped.
    Accepts an integer or an integer array for ``n``.
    """
    if not 0.0 < s <= 1.0:
        raise DomainError(f"fractional order must lie in (0, 1], got {s!r}")
    n_arr = np.asarray(n)
    if np.any(n_arr < 1):
        raise DomainError("mode index must be >= 1")
    val = (n_arr * np.pi / 2.0 - (2.0 - 2.0 * s) * np.pi / 8.0) ** (2.0 * s)
    return float(val) if np.ndim(val) == 0 else val


def exact_prefactor(s: float) -> float:
    return math.gamma(0.5) * 2.0 ** (-2.0 * s) / (math.gamma(1.0 + s) * math.gamma(0.5 + s))


def exact_solution(x, t, s: float):
    """Manufactured solution e^t K_s (1 - x^2)_+^s, zero for |x| >= 1.

    K_s is chosen so that (-d^2/dx^2)^s of the profile equals e^t on (-1, 1).
    """
    x = np.asarray(x, dtype=float)
    base = np.clip(1.0 - x * x, 0.0, None)
    val = exact_prefactor(s) * np.exp(t) * base ** s
    return float(val) if np.ndim(val) == 0 else val


def exact_source(x, t, s: float):
    """Right-hand side d/dt u + (-d^2/dx^2)^s u for :func:`exact_solution` on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    val = exact_solution(x, t, s) + np.exp(t) * (np.abs(x) < 1.0)
    return float(val) if np.ndim(val) == 0 else val


def exterior_kernel_integral(x, s: float):
    """Integral of |x - y|^{-1-2s} over y in (-1, 1) for exterior points |x| > 1."""
    x = np.abs(np.asarray(x, dtype=float))
    if np.any(x <= 1.0):
        raise DomainError("exterior kernel integral needs |x| > 1")
    val = ((x - 1.0) ** (-2 * s) - (x + 1.0) ** (-2 * s)) / (2.0 * s)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class FracParams:
    """Fractional order plus the geometry of domain, truncation box and control window."""

    s: float = 0.8
    control_window: tuple[float, float] = (1.7, 1.9)
    domain: tuple[float, float] = DOMAIN
    box: tuple[float, float] = BOX
    c_s: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "c_s", normalization_constant(self.s))
        a, b = map(float, self.control_window)
        if not a < b:
            raise ConfigurationError(f"empty control window {self.control_window}")
        lo, hi = self.domain
        blo, bhi = self.box
        if not (b < lo or a > hi):
            raise ConfigurationError("control window closure must be disjoint from [-1, 1]")
        if a < blo or b > bhi:
            raise ConfigurationError("control window must lie inside the truncation box")
        object.__setattr__(self, "control_window", (a, b))

    @property
    def controllable(self) -> bool:
        return self.s > 0.5

    def require_controllable(self) -> None:
        if not self.controllable:
            raise DomainError(f"controllability routines need 1/2 < s < 1, got s={self.s}")
