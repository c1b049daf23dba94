//! Exterior and cavity Neumann problems for the liquid potential, and the
//! added-mass matrix built from their solutions.

mod added_mass;
mod bem;

pub use added_mass::{
    added_mass, added_mass_jacobian, added_mass_jacobian_reduced, basis_potentials,
    basis_potentials_along, boundary_meshes, direction_data, velocity_potential, AddedMassMatrix,
    JACOBIAN_FD_STEP,
};

pub use bem::{
    solve_neumann, BoundarySolver, FieldValue, NeumannProblem, PotentialSolution,
    COMPATIBILITY_TOL, MAX_CONDITION,
};
