//! Linear programming: a dense simplex solver and the optimal
//! adversarial-error mechanism built on it.

pub mod shokri;
pub mod simplex;

pub use shokri::{build_shokri_lp, extract_mechanism, solve_shokri, ShokriInstance};
pub use simplex::{simplex_solve, Constraint, LinearProgram, LpSolution, LpStatus, Objective, Pricing, Sense, SimplexOptions};
