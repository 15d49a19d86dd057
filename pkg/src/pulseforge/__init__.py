"""Inverse-engineered drive design and simulation for a dissipative qutrit."""

__version__ = "0.1.0"

from .core import DecoherenceRates, DensityParams, family_matrix, matrix_to_params, params_to_matrix
from .lindblad import PulseSchedule, Trajectory, evolve
from .population import PopulationTarget, design_population_pulses
from .coherence import CoherenceTarget, design_coherence_pulses

__all__ = [
    "CoherenceTarget",
    "DecoherenceRates",
    "DensityParams",
    "PopulationTarget",
    "PulseSchedule",
    "Trajectory",
    "design_coherence_pulses",
    "design_population_pulses",
    "evolve",
    "family_matrix",
    "matrix_to_params",
    "params_to_matrix",
]
