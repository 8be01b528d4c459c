"""Spectral and variational numerics for the fourth-order nonlinear Helmholtz equation

    Delta^2 u - beta Delta u + alpha u = Gamma |u|^{p-2} u   in R^N.
"""

from .errors import *  # noqa: F401,F403
from .kernels import Case, ProblemParams, quartic_green, split_roots
from .spectral import Field, SpectralGrid, forward_ft, inverse_ft, lp_norm, power_map

__version__ = "0.1.0"

__all__ = [
    "Case",
    "Field",
    "ProblemParams",
    "SpectralGrid",
    "forward_ft",
    "inverse_ft",
    "lp_norm",
    "power_map",
    "quartic_green",
    "split_roots",
]
