"""Simulation and verification tools for Caputo fractional SDEs."""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    DivergenceError,
    DomainError,
    FitError,
    FracSDEError,
    QuadratureError,
    SeriesError,
    SizeError,
)
from .models import CoefficientModel, preset
from .paths import NoiseBatch, TimeGrid, make_grid, sample_noise
from .solver import SchemeConfig, Trajectory, picard_iterate, solve_coupled, solve_path

__all__ = [
    "CoefficientModel",
    "ContractError",
    "DivergenceError",
    "DomainError",
    "FitError",
    "FracSDEError",
    "NoiseBatch",
    "QuadratureError",
    "SchemeConfig",
    "SeriesError",
    "SizeError",
    "TimeGrid",
    "Trajectory",
    "make_grid",
    "picard_iterate",
    "preset",
    "sample_noise",
    "solve_coupled",
    "solve_path",
]
