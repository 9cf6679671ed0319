//! Drift fields `A(x, t, u, z)`, noise fields `H(x, t, z)`, and sampled
//! checks of their growth, ellipticity and Lipschitz conditions.

mod checks;
mod drift;
mod noise;

pub use checks::{check_gva, check_gvh, GvaReport, GvhReport, TOLERANCE};
pub use drift::{
    kappa_nu_from_lambdas, CoefficientModel, Drift, DriftParams, FluxFn, JacobianFn, MatrixFn, ScalarFn,
};
pub use noise::{AdditiveFn, NoiseFn, NoiseKind, NoiseModel};

use crate::error::{PnlError, Result};

/// Identifiers accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 4] = ["identity", "diag-anisotropic", "rotating-block", "zero"];

/// Builds a gallery model from its identifier. `turns` is only used by the
/// rotating block.
pub fn model_by_name(
    name: &str,
    n: usize,
    components: usize,
    lambda0: f64,
    lambda1: f64,
    turns: f64,
) -> Result<CoefficientModel> {
    match name {
        "identity" => CoefficientModel::identity(n, components),
        "diag-anisotropic" => CoefficientModel::diag_anisotropic(n, components, lambda0, lambda1),
        "rotating-block" => CoefficientModel::rotating_block(n, components, lambda0, lambda1, turns),
        "zero" => CoefficientModel::zero(n, components),
        "singular-candidate" => Err(PnlError::Config(
            "singular-candidate models take user coefficients and are only available from the library".into(),
        )),
        other => Err(PnlError::Config(format!(
            "unknown model '{other}', expected one of {}",
            MODEL_NAMES.join(", ")
        ))),
    }
}
