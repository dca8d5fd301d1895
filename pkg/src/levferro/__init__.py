"""Modeling, calibration and noise budgets for levitated-ferromagnet magnetometers."""

from .errors import (
    AliasingError,
    ConfigError,
    ConvergenceError,
    DegenerateFitError,
    DomainError,
    LevFerroError,
    MonteCarloFailureError,
    NoEquilibriumError,
    NoSolutionError,
    SingleRegimeError,
    StabilityError,
)
from .trap import EquilibriumState, MagnetParams, TrapGeometry

__all__ = [
    "AliasingError",
    "ConfigError",
    "ConvergenceError",
    "DegenerateFitError",
    "DomainError",
    "EquilibriumState",
    "LevFerroError",
    "MagnetParams",
    "MonteCarloFailureError",
    "NoEquilibriumError",
    "NoSolutionError",
    "SingleRegimeError",
    "StabilityError",
    "TrapGeometry",
]

__version__ = "0.1.0"
