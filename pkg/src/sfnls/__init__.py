"""Spectral simulation of a damped stochastic fractional NLS with phase noise."""

from .grid import GridSpec, SpectralField, make_grid, norms
from .model import ForcingSpec, ModelParams, validate_params, theorem_pair
from .stochastic import NoisePath, sample_path, quiet_path
from .dynamics import IntegratorConfig, TrajectoryState, evolve, step_u, step_v, free_propagator
from .observables import CutoffSpec, DiagnosticsRecord, energy, mass, gn_ratio
from .ground_state import GroundState, solve_ground_state

__all__ = [
    "GridSpec", "SpectralField", "make_grid", "norms",
    "ForcingSpec", "ModelParams", "validate_params", "theorem_pair",
    "NoisePath", "sample_path", "quiet_path",
    "IntegratorConfig", "TrajectoryState", "evolve", "step_u", "step_v", "free_propagator",
    "CutoffSpec", "DiagnosticsRecord", "energy", "mass", "gn_ratio",
    "GroundState", "solve_ground_state",
]
