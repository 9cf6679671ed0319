//! Sampled verification of the structural assumptions on `A` and `H`.
//!
//! Every entry of a report is the maximum over samples of `lhs - rhs` for one
//! inequality; a non-positive value (up to [`TOLERANCE`]) means no violation
//! was found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;

use super::drift::{fd_step, CoefficientModel};
use super::noise::NoiseModel;

/// Slack on the sign of a reported maximum; absorbs rounding in the
/// closed-form right-hand sides and in central differences.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GvaReport {
    pub samples: usize,
    /// `|A| - L (|z| + |u|^{(n+2)/n} + f^{a/2})`.
    pub growth: f64,
    /// `|xi - kappa D_z A xi|^2 - (1 - nu^2) |xi|^2`.
    pub contraction: f64,
    /// `|D_u A| - L (|z|^{2/(n+2)} + |u|^{2/n} + f)`.
    pub du_bound: f64,
    /// `|D_x A| - L (|z| + |u|^{(n+2)/n} + f^2)`.
    pub dx_bound: f64,
    /// `lambda0 |xi|^2 - <D_z A xi, xi>`.
    pub lambda_lower: f64,
    /// `|D_z A xi| - lambda1 |xi|`.
    pub lambda_upper: f64,
}

impl GvaReport {
    pub fn passes(&self) -> bool {
        [self.growth, self.contraction, self.du_bound, self.dx_bound, self.lambda_lower, self.lambda_upper]
            .iter()
            .all(|v| *v <= TOLERANCE)
    }

    /// Only the contraction form of the ellipticity condition.
    pub fn contraction_passes(&self) -> bool {
        self.contraction <= TOLERANCE
    }

    /// Only the `(lambda0, lambda1)` form.
    pub fn lambda_passes(&self) -> bool {
        self.lambda_lower <= TOLERANCE && self.lambda_upper <= TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GvhReport {
    pub samples: usize,
    /// `|H(z) - H(z~)| - L_H |z - z~|`.
    pub lipschitz: f64,
    /// `|H| - L (f_H + |z|)`.
    pub growth: f64,
    /// `|D_x H| - L (f_H^{a/(a-2)} + |z|)`.
    pub dx_bound: f64,
}

impl GvhReport {
    pub fn passes(&self) -> bool {
        self.lipschitz <= TOLERANCE && self.growth <= TOLERANCE && self.dx_bound <= TOLERANCE
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Magnitudes spread over four decades so that both the small- and the
/// large-argument regimes are probed.
fn magnitude(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(-2.0..2.0))
}

fn unit_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..m.len() / d).map(|r| m[r * d..(r + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Samples `(x, t, u, z, xi)` with `x` in the unit box and `t` in `[0, 1]`.
pub fn check_gva(model: &CoefficientModel, samples: usize, seed: u64) -> Result<GvaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.dim();
    let nf = n as f64;
    let nc = model.components();
    let d = model.width();
    let p = *model.params();
    let mut rep = GvaReport {
        samples,
        growth: f64::NEG_INFINITY,
        contraction: f64::NEG_INFINITY,
        du_bound: f64::NEG_INFINITY,
        dx_bound: f64::NEG_INFINITY,
        lambda_lower: f64::NEG_INFINITY,
        lambda_upper: f64::NEG_INFINITY,
    };
    for _ in 0..samples {
        let x = unit_point(&mut rng, n);
        let t = rng.gen::<f64>();
        let s_u = magnitude(&mut rng);
        let u = gaussian(&mut rng, nc, s_u);
        let s_z = magnitude(&mut rng);
        let z = gaussian(&mut rng, d, s_z);
        let xi = gaussian(&mut rng, d, 1.0);
        let f = model.forcing(&x, t).abs();
        let (zn, un, xin) = (norm(&z), norm(&u), norm(&xi));

        let a = model.eval(&x, t, &u, &z)?;
        let rhs = p.growth * (zn + un.powf((nf + 2.0) / nf) + f.powf(p.a / 2.0));
        rep.growth = rep.growth.max(norm(&a) - rhs);

        let j = model.jacobian(&x, t, &u, &z)?;
        let jxi = mat_vec(&j, &xi);
        let diff: Vec<f64> = xi.iter().zip(&jxi).map(|(a, b)| a - p.kappa * b).collect();
        rep.contraction = rep.contraction.max(norm(&diff).powi(2) - (1.0 - p.nu * p.nu) * xin * xin);
        let quad: f64 = jxi.iter().zip(&xi).map(|(a, b)| a * b).sum();
        rep.lambda_lower = rep.lambda_lower.max(p.lambda0 * xin * xin - quad);
        rep.lambda_upper = rep.lambda_upper.max(norm(&jxi) - p.lambda1 * xin);

        let du = model.du(&x, t, &u, &z)?;
        let rhs = p.growth * (zn.powf(2.0 / (nf + 2.0)) + un.powf(2.0 / nf) + f);
        rep.du_bound = rep.du_bound.max(norm(&du) - rhs);

        let dx = model.dx(&x, t, &u, &z)?;
        let rhs = p.growth * (zn + un.powf((nf + 2.0) / nf) + f * f);
        rep.dx_bound = rep.dx_bound.max(norm(&dx) - rhs);
    }
    Ok(rep)
}

/// Samples `(x, t, z, z~)` with `x` in the unit box and `t` in `[0, 1]`.
pub fn check_gvh(noise: &NoiseModel, samples: usize, seed: u64) -> Result<GvhReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = noise.dim();
    let d = n * noise.components();
    let a = noise.exponent();
    let f_power = if a.is_infinite() { 1.0 } else { a / (a - 2.0) };
    let lg = noise.growth();
    let mut rep = GvhReport {
        samples,
        lipschitz: f64::NEG_INFINITY,
        growth: f64::NEG_INFINITY,
        dx_bound: f64::NEG_INFINITY,
    };
    let width = noise.width();
    let (mut hp, mut hm) = (vec![0.0; width], vec![0.0; width]);
    for _ in 0..samples {
        let x = unit_point(&mut rng, n);
        let t = rng.gen::<f64>();
        let s_z = magnitude(&mut rng);
        let z = gaussian(&mut rng, d, s_z);
        let s_zt = magnitude(&mut rng);
        let zt = gaussian(&mut rng, d, s_zt);
        let fh = noise.f_h(&x, t).abs();

        let h = noise.eval(&x, t, &z)?;
        let ht = noise.eval(&x, t, &zt)?;
        let dh: Vec<f64> = h.iter().zip(&ht).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = z.iter().zip(&zt).map(|(a, b)| a - b).collect();
        rep.lipschitz = rep.lipschitz.max(norm(&dh) - noise.lipschitz() * norm(&dz));
        rep.growth = rep.growth.max(norm(&h) - lg * (fh + norm(&z)));

        let mut xp = x.clone();
        let mut sq = 0.0;
        for k in 0..n {
            let step = fd_step(x[k]);
            xp[k] = x[k] + step;
            noise.eval_into(&xp, t, &z, &mut hp);
            xp[k] = x[k] - step;
            noise.eval_into(&xp, t, &z, &mut hm);
            xp[k] = x[k];
            sq += hp.iter().zip(&hm).map(|(a, b)| ((a - b) / (2.0 * step)).powi(2)).sum::<f64>();
        }
        rep.dx_bound = rep.dx_bound.max(sq.sqrt() - lg * (fh.powf(f_power) + norm(&z)));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::drift::DriftParams;

    #[test]
    fn identity_contraction_is_exact() {
        let m = CoefficientModel::identity(2, 2).unwrap();
        let r = check_gva(&m, 200, 1).unwrap();
        assert_eq!(r.contraction, 0.0);
        assert!(r.passes());
    }

    #[test]
    fn diag_declared_passes_and_overstated_fails() {
        let m = CoefficientModel::diag_anisotropic(2, 1, 1.0, 4.0).unwrap();
        assert!(check_gva(&m, 500, 2).unwrap().passes());
        let mut p = *m.params();
        p.nu = 0.9;
        let bad = m.with_params(p);
        let r = check_gva(&bad, 500, 2).unwrap();
        assert!(r.contraction > 0.0);
        assert!(r.lambda_passes());
    }

    #[test]
    fn additive_and_gradient_noise() {
        use std::sync::Arc;
        let g: super::super::noise::AdditiveFn = Arc::new(|x, t, out| {
            out[0] = (x[0] + t).sin();
            out[1] = x[1];
        });
        let add = NoiseModel::additive(2, 1, 2, g).unwrap();
        let r = check_gvh(&add, 300, 3).unwrap();
        assert_eq!(r.lipschitz, 0.0);
        assert!(r.growth <= TOLERANCE);
        let lin = NoiseModel::linear_gradient(2, 3, 0.5).unwrap();
        let r = check_gvh(&lin, 300, 4).unwrap();
        assert!(r.lipschitz.abs() < 1e-12);
        assert!(r.passes());
    }

    #[test]
    fn nonlinear_growth_violation_is_reported() {
        use std::sync::Arc;
        let flux: super::super::drift::FluxFn = Arc::new(|_x, _t, u, z, out| {
            for (o, zi) in out.iter_mut().zip(z) {
                *o = zi + u[0].powi(3);
            }
        });
        let params = DriftParams { lambda0: 1.0, lambda1: 1.0, kappa: 1.0, nu: 1.0, growth: 1.0, a: 10.0 };
        let m = CoefficientModel::nonlinear("cubic", 1, 1, flux, None, params).unwrap();
        let r = check_gva(&m, 500, 5).unwrap();
        assert!(r.growth > 0.0);
        assert!(r.du_bound > 0.0);
        assert!(r.contraction.abs() < 1e-6);
    }
}
