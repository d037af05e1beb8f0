"""Exact constrained Hamiltonian mechanics for a translation-invariant three-body model.

The package covers Dirac's consistency algorithm, Dirac brackets, Darboux
charts on the constraint surface and the changes between them, abelian
conversion with partial gauge fixing, and reduction of quadratic quantum
dynamics at the level of linear canonical maps and Gaussian states.
"""

from .abelian import check_abelian, convert, gauge_fix, intermediate_symplectomorphism, random_valid_X, solve_X
from .algebra import (PhaseSpace, QuadraticObservable, SymplecticMap, conjugation_map, flow_matrix, is_symplectic,
                      linear_flow, poisson_bracket, substitute)
from .constraints import (ConstrainedSystem, Outcome, classify, dirac_bracket, dirac_matrix, gauge_transform,
                          run_consistency)
from .frames import (darboux_condition_rank, frame, frame_transformation, induced_brackets, mass_limit_check,
                     naive_embedding, relative_momentum_frame, relative_position_frame, solve_darboux)
from .model import (MassConfig, auxiliary_hamiltonian, build_n_particle_model, build_relative_model,
                    derive_relative_model, legendre_transform, relative_lagrangian_identity)
from .quantize import (GaussianState, evolve, find_generator, frame_change_via_neutral, gaussian_apply,
                       gaussian_condition, reduce_state, symmetry_reduce, trivialization)
from .scenario import ScenarioConfig, parse_config, run_scenario
from .verification import verify_reference

__version__ = "0.1.0"

__all__ = [
    "ConstrainedSystem", "GaussianState", "MassConfig", "Outcome", "PhaseSpace", "QuadraticObservable",
    "ScenarioConfig", "SymplecticMap", "auxiliary_hamiltonian", "build_n_particle_model", "build_relative_model",
    "check_abelian", "classify", "conjugation_map", "convert", "darboux_condition_rank", "derive_relative_model",
    "dirac_bracket", "dirac_matrix", "evolve", "find_generator", "flow_matrix", "frame", "frame_change_via_neutral",
    "frame_transformation", "gauge_fix", "gauge_transform", "gaussian_apply", "gaussian_condition",
    "induced_brackets", "intermediate_symplectomorphism", "is_symplectic", "legendre_transform", "linear_flow",
    "mass_limit_check", "naive_embedding", "parse_config", "poisson_bracket", "random_valid_X", "reduce_state",
    "relative_lagrangian_identity", "relative_momentum_frame", "relative_position_frame", "run_consistency",
    "run_scenario", "solve_X", "solve_darboux", "substitute", "symmetry_reduce", "trivialization", "verify_reference",
]
