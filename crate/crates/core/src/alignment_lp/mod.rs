//! Exact power alignment by linear programming.
//!
//! [`instance`] builds the storage scheduling program; [`simplex`] is a general
//! bounded-variable solver over [`model::LinearProgram`] with dense or sparse
//! basis factorizations ([`lu`]).

pub mod instance;
pub mod lu;
pub mod model;
pub mod simplex;

pub use instance::{
    build_instance, build_instance_excess, power_alignment, solve, solve_excess, solve_with,
    AlignmentFunction, ConstraintCounts, LpInstance, LpSolution, LpStatus,
};
pub use simplex::Factorization;
