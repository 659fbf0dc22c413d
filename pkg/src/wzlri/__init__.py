"""Wong-Zakai resonance-based integrator for the cubic NLS with white noise dispersion."""

__version__ = "0.1.0"

from .exceptions import ConfigurationError, DivergenceError, InsufficientDataError, StepFailure
from .spectral import TorusField
from .paths import BrownianPath, WongZakaiPath, sample_brownian
from .integrators import SchemeConfig, run_trajectory

__all__ = [
    "BrownianPath", "ConfigurationError", "DivergenceError", "InsufficientDataError",
    "SchemeConfig", "StepFailure", "TorusField", "WongZakaiPath", "run_trajectory",
    "sample_brownian",
]
