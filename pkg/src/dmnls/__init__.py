"""Simulation and variational toolkit for the dispersion-managed NLS.

The averaged equation is

    i u_t + d_av u_xx + Q(u) = 0,   Q(f) = ∫ T_r^{-1} P(T_r f) ψ(r) dr,

with T_r = exp(i r ∂_x²) and P(z) = h(|z|) z.
"""

from dmnls.grid import Field, Grid, make_grid, read_snapshot, write_snapshot
from dmnls.nonlinearity import NonlinearitySpec, builtin
from dmnls.dispersion import DispersionProfile, PsiMeasure, model_profile
from dmnls.operators import NonlocalContext, free_propagate
from dmnls.evolution import EvolutionConfig, Trajectory, evolve
from dmnls.variational import GroundStateResult, energy, energy_gradient, ground_state
from dmnls.stability import StabilityReport, orbit_distance, stability_experiment

__version__ = "0.1.0"

__all__ = [
    "DispersionProfile",
    "EvolutionConfig",
    "Field",
    "Grid",
    "GroundStateResult",
    "NonlinearitySpec",
    "NonlocalContext",
    "PsiMeasure",
    "StabilityReport",
    "Trajectory",
    "builtin",
    "energy",
    "energy_gradient",
    "evolve",
    "free_propagate",
    "ground_state",
    "make_grid",
    "model_profile",
    "orbit_distance",
    "read_snapshot",
    "stability_experiment",
    "write_snapshot",
]
