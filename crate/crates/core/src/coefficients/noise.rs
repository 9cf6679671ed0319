use std::fmt;
use std::sync::Arc;

use crate::error::{PnlError, Result};

use super::drift::ScalarFn;

/// `(x, t) -> g(x, t)` in `R^{n'N}` for additive noise.
pub type AdditiveFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// `(x, t, z) -> H(x, t, z)` in `R^{n'N}`.
pub type NoiseFn = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum NoiseKind {
    /// No noise at all.
    Zero,
    /// `H = g(x, t)`, independent of the gradient.
    Additive(AdditiveFn),
    /// `H_j^a = sigma D_j u^a` with one Brownian motion per direction.
    LinearGradient { sigma: f64 },
    /// General Lipschitz map with a declared constant.
    Custom(NoiseFn),
}

impl fmt::Debug for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Zero => write!(f, "Zero"),
            NoiseKind::Additive(_) => write!(f, "Additive"),
            NoiseKind::LinearGradient { sigma } => write!(f, "LinearGradient {{ sigma: {sigma} }}"),
            NoiseKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Noise field `H(x, t, z)`. Outputs are laid out `j * N + a`: the
/// coefficient of `dB^j` in the equation for component `a`.
#[derive(Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    n: usize,
    components: usize,
    brownian_dim: usize,
    lh: f64,
    growth: f64,
    a: f64,
    f_h: Option<ScalarFn>,
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseModel")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("components", &self.components)
            .field("brownian_dim", &self.brownian_dim)
            .field("lh", &self.lh)
            .field("growth", &self.growth)
            .finish()
    }
}

impl NoiseModel {
    pub fn zero(n: usize, components: usize) -> Self {
        NoiseModel {
            kind: NoiseKind::Zero,
            n,
            components,
            brownian_dim: n.max(1),
            lh: 0.0,
            growth: 0.0,
            a: f64::INFINITY,
            f_h: None,
        }
    }

    /// `H = g(x, t)`; `f_H = |g|`, `L_H = 0`, growth constant 1.
    pub fn additive(n: usize, components: usize, brownian_dim: usize, g: AdditiveFn) -> Result<Self> {
        if brownian_dim == 0 {
            return Err(PnlError::InvalidInput("Brownian dimension must be positive".into()));
        }
        let width = brownian_dim * components;
        let g2 = g.clone();
        let f_h: ScalarFn = Arc::new(move |x, t| {
            let mut out = vec![0.0; width];
            g2(x, t, &mut out);
            out.iter().map(|v| v * v).sum::<f64>().sqrt()
        });
        Ok(NoiseModel {
            kind: NoiseKind::Additive(g),
            n,
            components,
            brownian_dim,
            lh: 0.0,
            growth: 1.0,
            a: f64::INFINITY,
            f_h: Some(f_h),
        })
    }

    /// `H = sigma Du`, `n' = n`, `L_H = |sigma|`.
    pub fn linear_gradient(n: usize, components: usize, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(PnlError::InvalidInput(format!("sigma must be finite, got {sigma}")));
        }
        Ok(NoiseModel {
            kind: NoiseKind::LinearGradient { sigma },
            n,
            components,
            brownian_dim: n,
            lh: sigma.abs(),
            growth: sigma.abs(),
            a: f64::INFINITY,
            f_h: None,
        })
    }

    /// A user map with declared Lipschitz constant `lh` and growth constant.
    pub fn custom(
        n: usize,
        components: usize,
        brownian_dim: usize,
        h: NoiseFn,
        lh: f64,
        growth: f64,
        f_h: Option<ScalarFn>,
    ) -> Result<Self> {
        if !(lh >= 0.0) || !(growth >= 0.0) || brownian_dim == 0 {
            return Err(PnlError::InvalidInput("need L_H >= 0, L >= 0 and n' > 0".into()));
        }
        Ok(NoiseModel { kind: NoiseKind::Custom(h), n, components, brownian_dim, lh, growth, a: f64::INFINITY, f_h })
    }

    /// Sets the integrability exponent used in the `D_x H` bound.
    pub fn with_exponent(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn width(&self) -> usize {
        self.brownian_dim * self.components
    }

    pub fn lipschitz(&self) -> f64 {
        self.lh
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn is_zero(&self) -> bool {
        match self.kind {
            NoiseKind::Zero => true,
            NoiseKind::LinearGradient { sigma } => sigma == 0.0,
            _ => false,
        }
    }

    /// `sigma` for gradient noise.
    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::LinearGradient { sigma } => Some(sigma),
            _ => None,
        }
    }

    pub fn f_h(&self, x: &[f64], t: f64) -> f64 {
        self.f_h.as_ref().map_or(0.0, |f| f(x, t))
    }

    /// `H(x, t, z)` in `R^{n'N}`.
    pub fn eval(&self, x: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n * self.components {
            return Err(PnlError::ShapeMismatch(format!(
                "expected z in R^{}, got {}",
                self.n * self.components,
                z.len()
            )));
        }
        let mut out = vec![0.0; self.width()];
        self.eval_into(x, t, z, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PnlError::ModelEvaluation("noise returned non-finite values".into()));
        }
        Ok(out)
    }

    pub(crate) fn eval_into(&self, x: &[f64], t: f64, z: &[f64], out: &mut [f64]) {
        match &self.kind {
            NoiseKind::Zero => out.fill(0.0),
            NoiseKind::Additive(g) => g(x, t, out),
            NoiseKind::LinearGradient { sigma } => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = sigma * zi;
                }
            }
            NoiseKind::Custom(h) => h(x, t, z, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_ignores_gradient() {
        let g: AdditiveFn = Arc::new(|x, _t, out| out[0] = x[0]);
        let m = NoiseModel::additive(1, 1, 1, g).unwrap();
        assert_eq!(m.eval(&[0.3], 0.0, &[5.0]).unwrap(), m.eval(&[0.3], 0.0, &[-2.0]).unwrap());
        assert_eq!(m.lipschitz(), 0.0);
        assert_eq!(m.f_h(&[0.3], 0.0), 0.3);
    }

    #[test]
    fn gradient_noise_is_linear() {
        let m = NoiseModel::linear_gradient(2, 1, 0.5).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0], 0.0, &[2.0, -4.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(m.eval(&[0.0, 0.0], 0.0, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.lipschitz(), 0.5);
    }
}
