//! Numerical laboratory for stochastic parabolic systems
//! `du = div A(x,t,u,Du) dt + H(x,t,Du) dB_t` on structured grids.
//!
//! * [`field`]: grids, fields, discrete calculus, norms, snapshots.
//! * [`coefficients`]: drift and noise models and their structural checks.
//! * [`lemmas`]: closed-form truncation functions, thresholds and the
//!   exponent iteration schedule.
//! * [`sde`]: Brownian paths, semi-implicit time stepping, the Stratonovich
//!   correction and the exact transport solution.
//! * [`ensemble`]: Monte Carlo mean fields and weighted energy monitors.
//! * [`analytics`]: regularity estimators and the weak residual of the mean.
//! * [`experiment`]: configuration, manifests and the command implementations.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod coefficients;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod field;
pub mod lemmas;
pub mod sde;

pub use error::{PnlError, Result};
pub use field::{Boundary, Field, GridSpec, Region, Trajectory};
