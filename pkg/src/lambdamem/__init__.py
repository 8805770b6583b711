"""Simulation and analysis toolkit for Lambda-type atomic-ensemble quantum memories."""

__version__ = "0.1.0"

from .core import (ControlPulse, MemoryParams, SpectralField, TemporalField, TimeGrid,
                   control_envelope, gaussian_signal, signal_from_spectrum, to_spectrum, to_time)
from .fitting import FitResult
from .solver import GridConfig, SolveResult, solve, transmission_spectrum_linear

__all__ = [
    "ControlPulse",
    "FitResult",
    "GridConfig",
    "MemoryParams",
    "SolveResult",
    "SpectralField",
    "TemporalField",
    "TimeGrid",
    "control_envelope",
    "gaussian_signal",
    "signal_from_spectrum",
    "solve",
    "to_spectrum",
    "to_time",
    "transmission_spectrum_linear",
]
