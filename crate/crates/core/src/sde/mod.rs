//! Path simulation: Brownian paths, initial data, the drift operator and the
//! semi-implicit integrator.

mod brownian;
mod engine;
mod initial;
mod operator;
mod solver;

pub use brownian::{sample_brownian, uniform_times, BrownianPath};
pub use engine::{
    exact_transport, simulate, step_ito, step_stratonovich_linear, BlowUp, Scheme, SimConfig, SimOutcome,
    SolverSummary, Stepper, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_C_SAFE, DEFAULT_SOLVER_TOL,
};
pub use initial::{normal_cdf, InitialCondition};
pub use operator::DriftOperator;
pub use solver::{bicgstab, cg, LinearOperator, Method, SolveStats};
