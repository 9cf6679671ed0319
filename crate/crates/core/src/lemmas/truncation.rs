//! The `C^2` truncated power family and the angle inequalities of the
//! associated test-function maps.
//!
//! `T_{q,K}(t) = t^{2q}` for `t <= K` and, above `K`, the quadratic
//! `a K^{2q-2} t^2 + b K^{2q-1} t + c K^{2q}` with
//! `a = q(2q-1)`, `b = -4q(q-1)`, `c = 1 - 3q + 2q^2`, the unique choice that
//! matches value, slope and curvature at `t = K`.

use serde::Serialize;

use crate::error::{PnlError, Result};

use super::mu::{mu_power, mu_trunc};

/// `(T, T', T'')` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationFamily {
    q: f64,
    k: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl TruncationFamily {
    pub fn new(q: f64, k: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(PnlError::Domain(format!("truncation needs q >= 1, got {q}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(PnlError::Domain(format!("truncation needs K > 0, got {k}")));
        }
        Ok(TruncationFamily {
            q,
            k,
            a: q * (2.0 * q - 1.0),
            b: -4.0 * q * (q - 1.0),
            c: 1.0 - 3.0 * q + 2.0 * q * q,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Base (`K = 1`) quadratic coefficients `(a, b, c)`.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    /// Power branch `t^{2q}` and its derivatives, valid for any `t >= 0`.
    pub fn power_branch(&self, t: f64) -> Derivatives {
        let p = 2.0 * self.q;
        Derivatives {
            value: t.powf(p),
            first: p * t.powf(p - 1.0),
            second: p * (p - 1.0) * t.powf(p - 2.0),
        }
    }

    /// Quadratic branch with `K`-scaled coefficients, valid for any `t >= 0`.
    pub fn quadratic_branch(&self, t: f64) -> Derivatives {
        let p = 2.0 * self.q;
        let a = self.a * self.k.powf(p - 2.0);
        let b = self.b * self.k.powf(p - 1.0);
        let c = self.c * self.k.powf(p);
        Derivatives { value: a * t * t + b * t + c, first: 2.0 * a * t + b, second: 2.0 * a }
    }

    pub fn eval(&self, t: f64) -> Derivatives {
        if t <= self.k {
            self.power_branch(t)
        } else {
            self.quadratic_branch(t)
        }
    }

    /// Constant `c(q)` of the growth bound
    /// `T + T' t + T'' t^2 <= c(q) min{K^{2q-2} t^2, t^{2q}}`; it also bounds
    /// `T'' t / T'` and `T' t / T`.
    ///
    /// The ratio equals `1 + 4q^2` below `K` and `5a + 2b/s + c/s^2` (with
    /// `s = t/K`) above, which increases towards `5a = 5q(2q-1)`.
    pub fn growth_constant(&self) -> f64 {
        5.0 * self.a
    }
}

/// Outcome of an angle-inequality evaluation `Du . Dv >= sqrt(mu) |Du| |Dv|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    /// `Dv`, laid out like `Du` (`i * N + a`).
    pub dv: Vec<f64>,
    /// `Du . Dv`.
    pub lhs: f64,
    /// `sqrt(mu) |Du| |Dv|`.
    pub rhs: f64,
    pub dv_norm: f64,
    /// `T'(|u|) |u|^{-1} |Du|` for the truncated map, `|u|^s |Du|` for the power map.
    pub dv_lower: f64,
}

impl PairReport {
    /// Margin of the angle inequality relative to `rhs`.
    pub fn relative_margin(&self) -> f64 {
        (self.lhs - self.rhs) / self.rhs.abs().max(f64::MIN_POSITIVE)
    }
}

fn split(u: &[f64], du: &[f64]) -> Result<(usize, f64, Vec<f64>)> {
    let nc = u.len();
    if nc == 0 || du.is_empty() || du.len() % nc != 0 {
        return Err(PnlError::ShapeMismatch(format!(
            "Du must hold n * N entries with N = {nc}, got {}",
            du.len()
        )));
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(PnlError::DegenerateInput("the chain rule is evaluated where u != 0".into()));
    }
    let n = du.len() / nc;
    // (D_i u . u) for every direction i
    let proj = (0..n).map(|i| (0..nc).map(|a| du[i * nc + a] * u[a]).sum()).collect();
    Ok((n, norm, proj))
}

fn report(du: &[f64], dv: Vec<f64>, mu: f64, dv_lower: f64) -> PairReport {
    let lhs = du.iter().zip(&dv).map(|(a, b)| a * b).sum();
    let du_norm = du.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dv_norm = dv.iter().map(|v| v * v).sum::<f64>().sqrt();
    PairReport { lhs, rhs: mu.sqrt() * du_norm * dv_norm, dv_norm, dv_lower, dv }
}

/// `Dv` for `v = T'(|u|) |u|^{-1} u`:
/// `D_i v^a = T'(|u|) D_i u^a / |u| + (T''(|u|)|u| - T'(|u|)) (D_i u . u) u^a / |u|^3`.
pub fn truncation_pair(fam: &TruncationFamily, u: &[f64], du: &[f64]) -> Result<PairReport> {
    let (n, r, proj) = split(u, du)?;
    let nc = u.len();
    let d = fam.eval(r);
    let tilt = d.second * r - d.first;
    let mut dv = vec![0.0; du.len()];
    for i in 0..n {
        for a in 0..nc {
            dv[i * nc + a] = d.first * du[i * nc + a] / r + tilt * proj[i] * u[a] / (r * r * r);
        }
    }
    let du_norm = du.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(report(du, dv, mu_trunc(fam.q())?, d.first / r * du_norm))
}

/// `Dv` for `v = u |u|^s`: `D_i v^a = |u|^s D_i u^a + s |u|^{s-2} (D_i u . u) u^a`.
pub fn power_pair(s: f64, u: &[f64], du: &[f64]) -> Result<PairReport> {
    let mu = mu_power(s)?;
    let (n, r, proj) = split(u, du)?;
    let nc = u.len();
    let rs = r.powf(s);
    let rs2 = r.powf(s - 2.0);
    let mut dv = vec![0.0; du.len()];
    for i in 0..n {
        for a in 0..nc {
            dv[i * nc + a] = rs * du[i * nc + a] + s * rs2 * proj[i] * u[a];
        }
    }
    let du_norm = du.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(report(du, dv, mu, rs * du_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coefficients_solve_the_matching_system() {
        for q in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let (a, b, c) = TruncationFamily::new(q, 1.0).unwrap().coefficients();
            assert_relative_eq!(a + b + c, 1.0, epsilon = 1e-12);
            assert_relative_eq!(2.0 * a + b, 2.0 * q, epsilon = 1e-12);
            assert_relative_eq!(2.0 * a, 2.0 * q * (2.0 * q - 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_examples() {
        let f = TruncationFamily::new(1.0, 3.0).unwrap();
        for t in [0.0, 0.5, 3.0, 10.0] {
            let d = f.eval(t);
            assert_relative_eq!(d.value, t * t, epsilon = 1e-12);
            assert_relative_eq!(d.first, 2.0 * t, epsilon = 1e-12);
            assert_relative_eq!(d.second, 2.0, epsilon = 1e-12);
        }
        let f = TruncationFamily::new(2.0, 1.0).unwrap();
        let want = Derivatives { value: 1.0, first: 4.0, second: 12.0 };
        assert_eq!(f.power_branch(1.0), want);
        assert_eq!(f.quadratic_branch(1.0), want);
        assert_eq!(f.eval(2.0), Derivatives { value: 11.0, first: 16.0, second: 12.0 });
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TruncationFamily::new(0.5, 1.0).is_err());
        assert!(TruncationFamily::new(2.0, 0.0).is_err());
    }

    #[test]
    fn pair_degenerate_and_shape() {
        let f = TruncationFamily::new(2.0, 1.0).unwrap();
        assert!(matches!(truncation_pair(&f, &[0.0, 0.0], &[1.0; 4]), Err(PnlError::DegenerateInput(_))));
        assert!(truncation_pair(&f, &[1.0, 0.0], &[1.0; 3]).is_err());
    }

    #[test]
    fn q_one_is_an_equality() {
        let f = TruncationFamily::new(1.0, 0.7).unwrap();
        let du = [0.3, -1.2, 2.0, 0.5, 0.1, -0.4];
        let r = truncation_pair(&f, &[0.2, -0.9], &du).unwrap();
        let g2: f64 = du.iter().map(|v| v * v).sum();
        assert_relative_eq!(r.lhs, 2.0 * g2, epsilon = 1e-12);
        assert_relative_eq!(r.rhs, 2.0 * g2, epsilon = 1e-12);
    }

    #[test]
    fn scalar_case_is_collinear() {
        let f = TruncationFamily::new(3.0, 1.0).unwrap();
        let r = truncation_pair(&f, &[1.7], &[0.4, -2.0, 1.0]).unwrap();
        assert_relative_eq!(r.lhs, r.dv_norm * (0.16f64 + 4.0 + 1.0).sqrt(), epsilon = 1e-12);
        assert!(r.lhs >= r.rhs);
        let p = power_pair(1.5, &[-0.6], &[0.4, -2.0]).unwrap();
        assert!(p.lhs >= p.rhs);
    }

    #[test]
    fn power_pair_identity_case() {
        let du = [1.0, 2.0, -3.0, 0.5];
        let p = power_pair(0.0, &[0.3, 0.4], &du).unwrap();
        assert_eq!(p.dv, du.to_vec());
        assert_relative_eq!(p.lhs, p.rhs, epsilon = 1e-12);
    }
}
