//! Vector-valued fields on structured box grids, their discrete calculus and
//! norms, and the binary snapshot format.

mod calculus;
mod grid;
mod norms;
pub mod snapshot;
mod types;

pub(crate) use calculus::central_gradient_into;
pub use calculus::{
    central_gradient, diff_quotient, divergence, embedding_exponent, gradient, laplacian, shift_for,
};
pub use grid::{Boundary, GridSpec, Region, DEFAULT_NODE_BUDGET};
pub use norms::{lp_integral, lp_norm, lp_norm_region, spacetime_lp_norm, trapezoid, vmp_norm};
pub use types::{Field, Trajectory};
