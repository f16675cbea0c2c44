//! Discovery and control of conserved quantities from trajectory data.
//!
//! Pipeline: simulate an ensemble (`systems`), build monomial data matrices
//! (`features`), identify the null space of the generator regression
//! (`discovery`), cross-check candidates with Lie-Poisson brackets
//! (`bracket`), estimate the control matrix from forced data (`actuation`),
//! and steer the plant in the identified coordinates (`control`).

pub mod actuation;
pub mod bracket;
pub mod control;
pub mod discovery;
pub mod error;
pub mod features;
#[cfg(test)]
mod property_tests;
pub mod systems;

pub use actuation::{estimate_b, kron_row, ControlMatrixEstimate};
pub use bracket::{
    basis_partial, bracket_eval, build_d_matrix, discover_via_bracket, involution_check,
    recover_vector_field, BracketKind,
};
pub use control::{
    conserved_coordinates, control_gain_map, mpc_step, run_closed_loop, run_closed_loop_ensemble,
    ClosedLoopResult, ControlModel, MpcConfig, MpcStep,
};
pub use discovery::{
    build_generator_matrix, build_generator_matrix_stacked, eigenfunction_residual,
    largest_principal_angle, null_space, sparsify, InvariantSubspace, SparseCandidate,
};
pub use error::{Error, Result};
pub use features::{
    build_dictionary, diagonal_quadratic, differentiate_trajectory, eval_gamma, eval_theta,
    grad_theta_at, CoefficientVector, Dictionary,
};
pub use systems::{
    angular_momentum, integrate, kinetic_energy, multisine_forcing, rigid_body_rhs,
    sample_momentum_sphere, sample_momentum_spread, simulate_ensemble, DerivativeScheme, Dynamics,
    ForcingSignal, SystemSpec, TrajectoryDataset,
};
