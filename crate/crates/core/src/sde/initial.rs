//! Closed-form initial data. Keeping `u0` as a formula (not only as grid
//! values) lets the transport oracle evaluate shifted data exactly.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{PnlError, Result};
use crate::field::{Field, GridSpec};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `prod_i sin(k pi (x_i - o_i) / L_i)`; vanishes on the box faces, and is
    /// periodic for even `k`.
    SinProduct { k: u32 },
    /// `sin(2 pi k (x_axis - o) / L + phase)`.
    SinWave { axis: usize, k: u32, phase: f64 },
    /// Periodized, Gaussian-smoothed indicator of the upper half along
    /// `axis`: `sum_{j=-1,0,1} [Phi((y + j - 1/2)/eps) - Phi((y + j - 1)/eps)]`
    /// with `y` the coordinate scaled to `[0, 1)`.
    SmoothedStep { axis: usize, eps: f64 },
    /// `|x - c|^exponent`.
    Cusp { center: Vec<f64>, exponent: f64 },
    /// `exp(-|x - c|^2 / (2 w^2))`.
    Gaussian { center: Vec<f64>, width: f64 },
    Constant { value: f64 },
    /// `sum_j w_j u_j`.
    Sum { terms: Vec<(f64, InitialCondition)> },
}

impl InitialCondition {
    /// Value at `x` on a box with the given origin and extent.
    pub fn eval(&self, x: &[f64], origin: &[f64], extent: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            InitialCondition::SinProduct { k } => x
                .iter()
                .zip(origin)
                .zip(extent)
                .map(|((xi, o), l)| (*k as f64 * PI * (xi - o) / l).sin())
                .product(),
            InitialCondition::SinWave { axis, k, phase } => {
                (2.0 * PI * *k as f64 * (x[*axis] - origin[*axis]) / extent[*axis] + phase).sin()
            }
            InitialCondition::SmoothedStep { axis, eps } => {
                let y = (x[*axis] - origin[*axis]) / extent[*axis];
                (-1..=1)
                    .map(|j| {
                        let s = y + j as f64;
                        normal_cdf((s - 0.5) / eps) - normal_cdf((s - 1.0) / eps)
                    })
                    .sum()
            }
            InitialCondition::Cusp { center, exponent } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                r2.sqrt().powf(*exponent)
            }
            InitialCondition::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            InitialCondition::Constant { value } => *value,
            InitialCondition::Sum { terms } => terms.iter().map(|(w, ic)| w * ic.eval(x, origin, extent)).sum(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(PnlError::InvalidInput(msg));
        match self {
            InitialCondition::SinWave { axis, .. } | InitialCondition::SmoothedStep { axis, .. } if *axis >= n => {
                bad(format!("axis {axis} out of range for n = {n}"))
            }
            InitialCondition::SmoothedStep { eps, .. } if !(*eps > 0.0) => bad("smoothing width must be positive".into()),
            InitialCondition::Cusp { center, exponent } if center.len() != n || !(*exponent > 0.0) => {
                bad("cusp needs an n-point center and a positive exponent".into())
            }
            InitialCondition::Gaussian { center, width } if center.len() != n || !(*width > 0.0) => {
                bad("gaussian needs an n-point center and a positive width".into())
            }
            InitialCondition::Sum { terms } => terms.iter().try_for_each(|(_, ic)| ic.validate(n)),
            _ => Ok(()),
        }
    }

    /// Samples the data on `grid`, repeating it in every component.
    pub fn sample(&self, grid: &GridSpec, components: usize) -> Result<Field> {
        self.validate(grid.dim())?;
        let (origin, extent) = (grid.origin().to_vec(), grid.extent().to_vec());
        Field::from_fn(grid, components, |x, out| out.fill(self.eval(x, &origin, &extent)))
    }

    /// Samples `x -> u0(x + shift)`, wrapping the shifted point into the box.
    pub fn sample_shifted(&self, grid: &GridSpec, components: usize, shift: &[f64]) -> Result<Field> {
        self.validate(grid.dim())?;
        let (origin, extent) = (grid.origin().to_vec(), grid.extent().to_vec());
        let mut y = vec![0.0; grid.dim()];
        Field::from_fn(grid, components, |x, out| {
            for k in 0..x.len() {
                y[k] = origin[k] + (x[k] + shift[k] - origin[k]).rem_euclid(extent[k]);
            }
            out.fill(self.eval(&y, &origin, &extent));
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Boundary;
    use approx::assert_relative_eq;

    #[test]
    fn smoothed_step_is_periodic_indicator() {
        let ic = InitialCondition::SmoothedStep { axis: 0, eps: 0.01 };
        let o = [0.0];
        let l = [1.0];
        assert_relative_eq!(ic.eval(&[0.75], &o, &l), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ic.eval(&[0.25], &o, &l), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ic.eval(&[0.5], &o, &l), 0.5, epsilon = 1e-12);
        assert_relative_eq!(ic.eval(&[0.0], &o, &l), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn shifted_sin_wave() {
        let g = GridSpec::unit(2, 16, Boundary::Periodic).unwrap();
        let ic = InitialCondition::SinWave { axis: 0, k: 1, phase: 0.0 };
        let f = ic.sample_shifted(&g, 1, &[0.25, 0.0]).unwrap();
        let want = Field::from_fn(&g, 1, |x, out| out[0] = (2.0 * std::f64::consts::PI * x[0]).cos()).unwrap();
        for (a, b) in f.values().iter().zip(want.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-10);
    }
}
