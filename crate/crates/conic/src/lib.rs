//! Dense conic interior-point solver for problems of the form
//! `min c'x  s.t.  Ax = b,  h − Gx ∈ K` with `K` a product of nonnegative
//! orthants and second-order cones.
//!
//! Intended for desk-scale problems (a few thousand nonzeros); all linear
//! algebra is dense.

mod cones;
mod ipm;
mod problem;

pub use ipm::{ConicSolver, InteriorPoint, Residuals, Settings, Solution, Status};
pub use problem::{Cone, ConicProblem, Triplet};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("problem data contains non-finite values")]
    NonFinite,
    #[error("parse error at line {0}: {1}")]
    Parse(usize, String),
}
