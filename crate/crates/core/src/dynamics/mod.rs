//! The reduced Euler-Lagrange system for the shape coordinates and its
//! time integration.

mod constraint;
mod integrator;
mod model;
mod residual;
mod trajectory;

pub use constraint::{constraint_basis, volume_covector, ConstraintBasis};
pub use integrator::{dopri5, DenseStep, Integration, IntegratorOptions, Outcome, StepStats};
pub use model::{
    check_velocity_constraint, eom_flat, eom_rhs, volume_hessian_form, EomEvaluation, Model, State,
};
pub use residual::{
    boundary_residual, boundary_residual_with, boundary_residual_with_step, residual_of_dynamics,
};
pub use trajectory::{integrate, IntegrationSettings, Sample, TerminationReason, Trajectory};
