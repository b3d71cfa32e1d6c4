"""Phase-field approximation of grain-boundary energies with lattice
point-group symmetry: quotient metrics on O(d), the 1D cell problem behind
the surface energy density, grid minimization of the regularized energies,
the sharp-interface limit on grain maps, and polycrystal image segmentation.
"""

from .backend import BACKEND, USING_NUMBA
from .cellproblem import (CellParams, DamageModel, ProfilePath, f_eval,
                          g_infinity, g_lambda, g_star, repar_energy,
                          rs_scaling_table, rs_upper_bound)
from .matmanifold import (dist_orthogonal, misorientation_angle, polar_project,
                          project_ball, so_geodesic)
from .phasefield import (EnergyParams, OrientationField, PhaseField,
                         alternate_minimize, default_params, energy_total,
                         f_eps_eval, lift_field, minimize_step_beta,
                         minimize_step_v)
from .pointgroup import (PointGroup, canonical_rep, generate, named_group,
                         orbit, quotient_distance, rotation2,
                         separation_radius)
from .segmentation import (Image, LatticeSpec, extract_grain_map, fidelity,
                           fidelity_gradient, segment, synth_image)
from .sharpinterface import GrainMap, gamma_sweep, sharp_energy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "USING_NUMBA", "__version__",
    "PointGroup", "generate", "named_group", "orbit", "quotient_distance",
    "canonical_rep", "separation_radius", "rotation2",
    "project_ball", "dist_orthogonal", "polar_project", "so_geodesic",
    "misorientation_angle",
    "DamageModel", "CellParams", "ProfilePath", "f_eval", "repar_energy",
    "g_star", "g_lambda", "g_infinity", "rs_upper_bound", "rs_scaling_table",
    "EnergyParams", "OrientationField", "PhaseField", "f_eps_eval",
    "energy_total", "minimize_step_v", "minimize_step_beta",
    "alternate_minimize", "lift_field", "default_params",
    "Image", "LatticeSpec", "synth_image", "fidelity", "fidelity_gradient",
    "segment", "extract_grain_map",
    "GrainMap", "sharp_energy", "gamma_sweep",
]
