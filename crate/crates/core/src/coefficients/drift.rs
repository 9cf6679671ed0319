use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{PnlError, Result};

/// `A(x, t)` as a row-major `nN x nN` matrix acting on gradients laid out as
/// `i * N + a`.
pub type MatrixFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// `(x, t, u, z) -> A(x, t, u, z)` written into an `nN` slice.
pub type FluxFn = Arc<dyn Fn(&[f64], f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(x, t, u, z) -> D_z A` written row-major into an `nN x nN` slice.
pub type JacobianFn = Arc<dyn Fn(&[f64], f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Scalar closed-form data `f(x, t)`.
pub type ScalarFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    Linear {
        matrix: MatrixFn,
        varies_in_x: bool,
        varies_in_t: bool,
    },
    Nonlinear {
        flux: FluxFn,
        jacobian: Option<JacobianFn>,
    },
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Linear { varies_in_x, varies_in_t, .. } => f
                .debug_struct("Linear")
                .field("varies_in_x", varies_in_x)
                .field("varies_in_t", varies_in_t)
                .finish(),
            Drift::Nonlinear { jacobian, .. } => {
                f.debug_struct("Nonlinear").field("analytic_jacobian", &jacobian.is_some()).finish()
            }
        }
    }
}

/// Structural constants attached to a drift model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub kappa: f64,
    pub nu: f64,
    /// Growth constant `L`.
    pub growth: f64,
    /// Integrability exponent of the forcing bound, `a > n + 2`.
    pub a: f64,
}

/// Drift vector field `A(x, t, u, z)` with its structural parameters.
#[derive(Clone)]
pub struct CoefficientModel {
    name: String,
    n: usize,
    components: usize,
    drift: Drift,
    params: DriftParams,
    /// Added multiple of the identity, `A + shift * z`.
    shift: f64,
    forcing: Option<ScalarFn>,
    degenerate: bool,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("components", &self.components)
            .field("drift", &self.drift)
            .field("params", &self.params)
            .field("shift", &self.shift)
            .field("degenerate", &self.degenerate)
            .finish()
    }
}

/// `(kappa, nu) = (1 / lambda1, lambda0 / lambda1)`.
pub fn kappa_nu_from_lambdas(lambda0: f64, lambda1: f64) -> Result<(f64, f64)> {
    if !(lambda0 > 0.0 && lambda0 <= lambda1 && lambda1.is_finite()) {
        return Err(PnlError::InvalidEllipticity(format!(
            "need 0 < lambda0 <= lambda1, got ({lambda0}, {lambda1})"
        )));
    }
    Ok((1.0 / lambda1, lambda0 / lambda1))
}

fn default_a(n: usize) -> f64 {
    2.0 * (n as f64 + 2.0)
}

fn linear_params(n: usize, lambda0: f64, lambda1: f64) -> Result<DriftParams> {
    let (kappa, nu) = kappa_nu_from_lambdas(lambda0, lambda1)?;
    Ok(DriftParams { lambda0, lambda1, kappa, nu, growth: lambda1, a: default_a(n) })
}

fn check_shape(n: usize, components: usize) -> Result<()> {
    if n == 0 || components == 0 {
        return Err(PnlError::InvalidInput("dimension and component count must be positive".into()));
    }
    Ok(())
}

impl CoefficientModel {
    /// `A z = z`, the heat operator.
    pub fn identity(n: usize, components: usize) -> Result<Self> {
        Self::diag_anisotropic(n, components, 1.0, 1.0).map(|m| m.named("identity"))
    }

    /// Diagonal in the gradient index: `lambda0` on directions `0..n-1`,
    /// `lambda1` on the last direction.
    pub fn diag_anisotropic(n: usize, components: usize, lambda0: f64, lambda1: f64) -> Result<Self> {
        check_shape(n, components)?;
        let params = linear_params(n, lambda0, lambda1)?;
        let d = n * components;
        let matrix: MatrixFn = Arc::new(move |_x, _t, out| {
            out.fill(0.0);
            for i in 0..n {
                let lam = if i + 1 == n { lambda1 } else { lambda0 };
                for a in 0..components {
                    let r = i * components + a;
                    out[r * d + r] = lam;
                }
            }
        });
        Ok(Self::linear_raw("diag-anisotropic", n, components, matrix, false, false, params))
    }

    /// `R(theta(x)) diag(lambda0, lambda1) R(theta(x))^T` on the first two
    /// directions of every component, `lambda1` on the remaining directions,
    /// with `theta(x) = turns * pi * x_0`.
    pub fn rotating_block(n: usize, components: usize, lambda0: f64, lambda1: f64, turns: f64) -> Result<Self> {
        check_shape(n, components)?;
        if n < 2 {
            return Err(PnlError::InvalidInput("the rotating block needs n >= 2".into()));
        }
        let params = linear_params(n, lambda0, lambda1)?;
        let d = n * components;
        let matrix: MatrixFn = Arc::new(move |x, _t, out| {
            out.fill(0.0);
            let (s, c) = (turns * std::f64::consts::PI * x[0]).sin_cos();
            let m00 = lambda0 * c * c + lambda1 * s * s;
            let m11 = lambda0 * s * s + lambda1 * c * c;
            let m01 = (lambda0 - lambda1) * c * s;
            for a in 0..components {
                let r0 = a;
                let r1 = components + a;
                out[r0 * d + r0] = m00;
                out[r1 * d + r1] = m11;
                out[r0 * d + r1] = m01;
                out[r1 * d + r0] = m01;
                for i in 2..n {
                    let r = i * components + a;
                    out[r * d + r] = lambda1;
                }
            }
        });
        Ok(Self::linear_raw("rotating-block", n, components, matrix, true, false, params))
    }

    /// `A = 0`. Not elliptic; only meaningful with a Stratonovich shift or in
    /// explicit-scheme tests.
    pub fn zero(n: usize, components: usize) -> Result<Self> {
        check_shape(n, components)?;
        let matrix: MatrixFn = Arc::new(|_x, _t, out| out.fill(0.0));
        let params = DriftParams { lambda0: 0.0, lambda1: 0.0, kappa: 1.0, nu: 0.0, growth: 0.0, a: default_a(n) };
        let mut m = Self::linear_raw("zero", n, components, matrix, false, false, params);
        m.degenerate = true;
        Ok(m)
    }

    /// User-supplied linear coefficients with declared bounds; the slot for
    /// counterexample studies.
    #[allow(clippy::too_many_arguments)]
    pub fn singular_candidate(
        n: usize,
        components: usize,
        matrix: MatrixFn,
        lambda0: f64,
        lambda1: f64,
        varies_in_x: bool,
        varies_in_t: bool,
    ) -> Result<Self> {
        check_shape(n, components)?;
        let params = linear_params(n, lambda0, lambda1)?;
        Ok(Self::linear_raw("singular-candidate", n, components, matrix, varies_in_x, varies_in_t, params))
    }

    /// Nonlinear `A(x, t, u, z)`; without `jacobian` the derivative in `z` is
    /// taken by central differences.
    pub fn nonlinear(
        name: &str,
        n: usize,
        components: usize,
        flux: FluxFn,
        jacobian: Option<JacobianFn>,
        params: DriftParams,
    ) -> Result<Self> {
        check_shape(n, components)?;
        if !(params.kappa > 0.0) || !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(PnlError::InvalidEllipticity(format!(
                "need kappa > 0 and nu in (0,1], got {} and {}",
                params.kappa, params.nu
            )));
        }
        Ok(CoefficientModel {
            name: name.to_string(),
            n,
            components,
            drift: Drift::Nonlinear { flux, jacobian },
            params,
            shift: 0.0,
            forcing: None,
            degenerate: false,
        })
    }

    fn linear_raw(
        name: &str,
        n: usize,
        components: usize,
        matrix: MatrixFn,
        varies_in_x: bool,
        varies_in_t: bool,
        params: DriftParams,
    ) -> Self {
        CoefficientModel {
            name: name.to_string(),
            n,
            components,
            drift: Drift::Linear { matrix, varies_in_x, varies_in_t },
            params,
            shift: 0.0,
            forcing: None,
            degenerate: false,
        }
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// `A + s z`. The structural constants are updated for the shifted
    /// spectrum `[lambda0 + s, lambda1 + s]`.
    pub fn shifted(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(PnlError::InvalidInput(format!("shift must be finite and non-negative, got {s}")));
        }
        let mut m = self.clone();
        m.shift += s;
        if s > 0.0 {
            let lambda0 = m.params.lambda0 + s;
            let lambda1 = m.params.lambda1 + s;
            let (kappa, nu) = kappa_nu_from_lambdas(lambda0, lambda1)?;
            m.params = DriftParams { lambda0, lambda1, kappa, nu, growth: m.params.growth + s, a: m.params.a };
            m.degenerate = false;
        }
        Ok(m)
    }

    pub fn with_forcing(mut self, f: ScalarFn) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn with_params(mut self, params: DriftParams) -> Self {
        self.params = params;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Length `nN` of the gradient variable.
    pub fn width(&self) -> usize {
        self.n * self.components
    }

    pub fn params(&self) -> &DriftParams {
        &self.params
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.drift, Drift::Linear { .. })
    }

    /// Coefficients independent of `t` and of the state.
    pub fn is_frozen_in_time(&self) -> bool {
        matches!(self.drift, Drift::Linear { varies_in_t: false, .. })
    }

    pub fn forcing(&self, x: &[f64], t: f64) -> f64 {
        self.forcing.as_ref().map_or(0.0, |f| f(x, t))
    }

    fn check_args(&self, u: &[f64], z: &[f64]) -> Result<()> {
        if u.len() != self.components || z.len() != self.width() {
            return Err(PnlError::ShapeMismatch(format!(
                "expected u in R^{} and z in R^{}, got {} and {}",
                self.components,
                self.width(),
                u.len(),
                z.len()
            )));
        }
        Ok(())
    }

    /// `A(x, t, u, z)`.
    pub fn eval(&self, x: &[f64], t: f64, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(u, z)?;
        let mut out = vec![0.0; self.width()];
        self.eval_into(x, t, u, z, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PnlError::ModelEvaluation(format!("{} returned non-finite values", self.name)));
        }
        Ok(out)
    }

    pub(crate) fn eval_into(&self, x: &[f64], t: f64, u: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.width();
        match &self.drift {
            Drift::Linear { matrix, .. } => {
                let mut m = vec![0.0; d * d];
                matrix(x, t, &mut m);
                for (r, o) in out.iter_mut().enumerate() {
                    *o = m[r * d..(r + 1) * d].iter().zip(z).map(|(a, b)| a * b).sum();
                }
            }
            Drift::Nonlinear { flux, .. } => flux(x, t, u, z, out),
        }
        if self.shift != 0.0 {
            for (o, zi) in out.iter_mut().zip(z) {
                *o += self.shift * zi;
            }
        }
    }

    /// `D_z A(x, t, u, z)`, row-major `nN x nN`.
    pub fn jacobian(&self, x: &[f64], t: f64, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(u, z)?;
        let d = self.width();
        let mut out = vec![0.0; d * d];
        self.jacobian_into(x, t, u, z, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PnlError::ModelEvaluation(format!("{} has a non-finite Jacobian", self.name)));
        }
        Ok(out)
    }

    pub(crate) fn jacobian_into(&self, x: &[f64], t: f64, u: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.width();
        match &self.drift {
            Drift::Linear { matrix, .. } => matrix(x, t, out),
            Drift::Nonlinear { jacobian: Some(j), .. } => j(x, t, u, z, out),
            Drift::Nonlinear { flux, jacobian: None } => {
                let mut zp = z.to_vec();
                let mut fp = vec![0.0; d];
                let mut fm = vec![0.0; d];
                for c in 0..d {
                    let h = fd_step(z[c]);
                    zp[c] = z[c] + h;
                    flux(x, t, u, &zp, &mut fp);
                    zp[c] = z[c] - h;
                    flux(x, t, u, &zp, &mut fm);
                    zp[c] = z[c];
                    for r in 0..d {
                        out[r * d + c] = (fp[r] - fm[r]) / (2.0 * h);
                    }
                }
            }
        }
        if self.shift != 0.0 {
            for r in 0..d {
                out[r * d + r] += self.shift;
            }
        }
    }

    /// `D_u A`, row-major `nN x N`, by central differences (exactly zero for
    /// linear models).
    pub fn du(&self, x: &[f64], t: f64, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(u, z)?;
        let d = self.width();
        let nc = self.components;
        let mut out = vec![0.0; d * nc];
        if self.is_linear() {
            return Ok(out);
        }
        let mut up = u.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for c in 0..nc {
            let h = fd_step(u[c]);
            up[c] = u[c] + h;
            self.eval_into(x, t, &up, z, &mut fp);
            up[c] = u[c] - h;
            self.eval_into(x, t, &up, z, &mut fm);
            up[c] = u[c];
            for r in 0..d {
                out[r * nc + c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// `D_x A`, row-major `nN x n`, by central differences.
    pub fn dx(&self, x: &[f64], t: f64, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(u, z)?;
        let d = self.width();
        let n = self.n;
        let mut out = vec![0.0; d * n];
        if matches!(self.drift, Drift::Linear { varies_in_x: false, .. }) {
            return Ok(out);
        }
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for k in 0..n {
            let h = fd_step(x[k]);
            xp[k] = x[k] + h;
            self.eval_into(&xp, t, u, z, &mut fp);
            xp[k] = x[k] - h;
            self.eval_into(&xp, t, u, z, &mut fm);
            xp[k] = x[k];
            for r in 0..d {
                out[r * n + k] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(out)
    }
}

/// Central-difference step `1e-6 (1 + |arg|)`.
pub(crate) fn fd_step(arg: f64) -> f64 {
    1e-6 * (1.0 + arg.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kappa_nu_examples() {
        assert_eq!(kappa_nu_from_lambdas(1.0, 1.0).unwrap(), (1.0, 1.0));
        assert_eq!(kappa_nu_from_lambdas(1.0, 4.0).unwrap(), (0.25, 0.25));
        assert_eq!(kappa_nu_from_lambdas(2.0, 4.0).unwrap(), (0.25, 0.5));
        assert!(matches!(kappa_nu_from_lambdas(4.0, 1.0), Err(PnlError::InvalidEllipticity(_))));
        let (k, nu) = kappa_nu_from_lambdas(3.0, 12.0).unwrap();
        assert_relative_eq!(k, 0.25 / 3.0);
        assert_relative_eq!(nu, 0.25);
    }

    #[test]
    fn eval_examples() {
        let id = CoefficientModel::identity(2, 2).unwrap();
        let z = [0.3, -1.0, 2.0, 5.0];
        assert_eq!(id.eval(&[0.1, 0.2], 0.0, &[1.0, 1.0], &z).unwrap(), z.to_vec());
        let diag = CoefficientModel::diag_anisotropic(3, 1, 1.0, 4.0).unwrap();
        assert_eq!(diag.eval(&[0.0; 3], 0.0, &[0.0], &[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 4.0]);
        assert_eq!(diag.eval(&[0.0; 3], 0.0, &[0.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(diag.eval(&[0.0; 3], 0.0, &[0.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn shift_adds_identity() {
        let m = CoefficientModel::zero(2, 1).unwrap().shifted(0.5).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0], 0.0, &[0.0], &[2.0, -4.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(m.params().nu, 1.0);
        assert!(!m.is_degenerate());
    }

    #[test]
    fn rotating_block_spectrum() {
        let m = CoefficientModel::rotating_block(2, 1, 1.0, 4.0, 1.0).unwrap();
        let j = m.jacobian(&[0.3, 0.0], 0.0, &[0.0], &[0.0, 0.0]).unwrap();
        let tr = j[0] + j[3];
        let det = j[0] * j[3] - j[1] * j[2];
        assert_relative_eq!(tr, 5.0, epsilon = 1e-12);
        assert_relative_eq!(det, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn nonlinear_jacobian_by_differences() {
        let flux: FluxFn = Arc::new(|_x, _t, _u, z, out| {
            let r2: f64 = z.iter().map(|v| v * v).sum();
            for (o, zi) in out.iter_mut().zip(z) {
                *o = (1.0 + 0.5 / (1.0 + r2)) * zi;
            }
        });
        let params = DriftParams { lambda0: 1.0, lambda1: 1.5, kappa: 0.5, nu: 0.5, growth: 1.5, a: 10.0 };
        let m = CoefficientModel::nonlinear("saturating", 2, 1, flux, None, params).unwrap();
        let z = [0.4, -0.2];
        let j = m.jacobian(&[0.0, 0.0], 0.0, &[0.0], &z).unwrap();
        let r2: f64 = 0.2;
        let want00 = 1.0 + 0.5 / (1.0 + r2) - 0.5 * 2.0 * z[0] * z[0] / (1.0 + r2).powi(2);
        assert_relative_eq!(j[0], want00, epsilon = 1e-8);
    }
}
