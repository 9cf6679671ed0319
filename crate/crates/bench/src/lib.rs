//! Shared fixtures for the benchmarks.

use pnl_core::coefficients::{CoefficientModel, NoiseModel};
use pnl_core::sde::{InitialCondition, Scheme, SimConfig};
use pnl_core::{Boundary, GridSpec, Result};

/// Heat-type system on the unit torus with `sigma Du` noise, `steps` steps of
/// size `0.4 h^2`.
pub fn noisy_heat(cells: usize, steps: usize, sigma: f64) -> Result<SimConfig> {
    let grid = GridSpec::unit(2, cells, Boundary::Periodic)?;
    let h = 1.0 / cells as f64;
    let horizon = steps as f64 * 0.4 * h * h;
    SimConfig::from_initial(
        grid,
        CoefficientModel::diag_anisotropic(2, 1, 1.0, 2.0)?,
        NoiseModel::linear_gradient(2, 1, sigma)?,
        Scheme::ItoSemiImplicit,
        horizon,
        steps,
        InitialCondition::SinWave { axis: 0, k: 1, phase: 0.0 },
    )
}
