"""Energy-stable, mass-conservative dynamical low-rank solvers for the Su-Olson
thermal radiative transfer problem in multiplicative splitting form.

The particle density is written f = B g, with g expanded in normalized Legendre
moments on a periodic slab. Two full-rank reference steppers (conservative and
advection form) and an augmented basis-update Galerkin low-rank stepper share
one mesh and one angular basis.
"""

from .angular import AngularBasis, build_abs_matrices, build_flux_matrix, evaluate_legendre
from .diagnostics import (DiagnosticsRecord, evaluate_distribution, local_conservation_residual,
                          relative_conservation_residual, scalar_flux, state_energy,
                          state_mass, temperature, total_energy, total_mass)
from .dlra import (LowRankState, TruncationConfig, augment_bases, k_step, l_step, s_step,
                   step_dlra, truncate_conservative)
from .experiments import (ConfigError, ExperimentConfig, RunResult, init_external_source,
                          init_plane_source, load_config, run_experiment, simulate)
from .full import (MomentField, NonPositiveEnergyError, SolverConfig, SolverError,
                   solve_coupled_cell, step_full_advection, step_full_conservative)
from .linalg import LinalgError, qr_orthonormalize, svd, symmetric_eig
from .mesh import SpatialMesh, StencilSet, apply_stencil, build_stencils

__version__ = "0.1.0"
