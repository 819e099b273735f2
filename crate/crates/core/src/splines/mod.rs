//! Spline machinery for weight smoothing: knot placement driven by the
//! non-central beta distribution, B-spline bases, general P-spline difference
//! and penalty matrices, and precomputed hat matrices.

mod basis;
mod hat;
mod knots;
mod penalty;

pub use basis::{bspline_basis, BasisMatrix};
pub use hat::{hat_matrix, HatMatrix};
pub use knots::{make_knots, noncentral_beta_cdf, KnotSpec};
pub use penalty::{difference_matrix_general, penalty_matrix, PenaltySpec};
