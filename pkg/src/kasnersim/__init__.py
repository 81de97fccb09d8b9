"""Numerical evolution of perturbed Kasner cosmologies toward the Big Bang.

The package evolves the Einstein-scalar-field system on (0,1] x T^D in
constant-mean-curvature time with all tensors expressed through an
orthonormal spatial frame, and provides the constraint, curvature and
asymptotic-exponent diagnostics needed to study the approach to the
singularity quantitatively.
"""

from .background import (BackgroundFields, ConstraintReport, KasnerData,
                         MarginReport, SearchResult, StabilityParams,
                         background_fields, flrw, search_subcritical_vacuum,
                         subcriticality_margin, validate_constraints)
from .diagnostics import (DiagnosticsRecord, FinalState, NormConfig,
                          compute_record, final_kasner_data,
                          hamiltonian_residual, initial_data_norm,
                          kretschmann, kretschmann_asymptotic,
                          momentum_residual, solution_norms, spatial_ricci)
from .evolution import (EvolutionAbort, EvolveConfig, assemble_rhs, evolve,
                        rhs_frame, rhs_gamma, rhs_k, rhs_psi, step,
                        structure_rhs_diagonal)
from .frames import (NonSPDMetricError, duality_residual, gram_schmidt_frame,
                     gram_schmidt_frame_u1, koszul_gamma, metric_from_coframe,
                     recover_gamma, structure_coefficients)
from .grid import Grid, frame_derivative, frame_divergence
from .initial_data import (ConstraintResidualError, enforce_cmc_trace,
                           kasner_coordinate_data, mode_field,
                           perturbed_kasner_data, project_hamiltonian,
                           state_from_geometric_data)
from .lapse import (LapseConvergenceError, LapsePositivityError,
                    LapseSolveConfig, solve_lapse)
from .state import ReducedState, algebraic_residuals, background_state
from .u1 import build_polarized_data, check_symmetry

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
