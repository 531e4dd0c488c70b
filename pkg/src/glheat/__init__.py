"""Penalized harmonic heat flow laboratory.

Integrates the Ginzburg-Landau relaxation of the sphere-valued heat flow in
corotational symmetry, with a time-decaying penalty exponent, and measures
the structural estimates of the flow at desk scale: the exact energy
balance, the 1/log(lambda) penalty decay, weighted energy decay, boundary
flux (Pokhojaev) control, quasi-monotonicity of the backward-Gaussian
scaled energy, reverse Poincare and hybrid bounds, and parabolic
box-counting of the singular-suspect set.
"""

from ._kernels import BACKEND
from .errors import ConfigError, ContainmentError, GLHeatError, NumericsError
from .grid import CorotationalField, InitialDatum, RadialGrid
from .scheme import SchemeParams
from .solver import StepperConfig, Trajectory, run

__all__ = [
    "BACKEND",
    "ConfigError",
    "ContainmentError",
    "CorotationalField",
    "GLHeatError",
    "InitialDatum",
    "NumericsError",
    "RadialGrid",
    "SchemeParams",
    "StepperConfig",
    "Trajectory",
    "run",
]

__version__ = "0.1.0"
