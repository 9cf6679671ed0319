//! Closed-form analytic objects: the `mu` functions, the truncated power
//! family and its chain-rule inequality, dispersion and noise thresholds, the
//! exponent schedule and the Hölder exponent combiner.

mod hoelder;
mod mu;
mod schedule;
mod thresholds;
pub mod suite;
mod truncation;

pub use hoelder::{hoelder_combine, HoelderExponents};
pub use mu::{mu_power, mu_trunc};
pub use schedule::{iteration_schedule, next_exponent, q_max, IterationSchedule};
pub use thresholds::{
    admissible_q_bound, dispersion_ok_elliptic, dispersion_ok_parabolic, elliptic_dispersion, lh_star_inverse,
    lh_star_n, lh_star_q, shifted_dispersion_ratio, sigma_zero,
};
pub use truncation::{power_pair, truncation_pair, Derivatives, PairReport, TruncationFamily};
