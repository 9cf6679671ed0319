//! Combination of spatial integrability and temporal `L^2` regularity into a
//! joint Hölder exponent.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoelderExponents {
    /// Morrey exponent `1 - n/(n+alpha)` of `Du in L^{n+alpha}`.
    pub delta: f64,
    /// Ball radius exponent `rho = |t-s|^eps`.
    pub eps: f64,
    /// Joint exponent `min(delta beta / n, beta / 2)`.
    pub gamma: f64,
    /// Set when `alpha <= 0` or `beta <= 0`; `gamma` is then 0.
    pub degenerate: bool,
}

pub fn hoelder_combine(alpha: f64, beta: f64, n: usize) -> HoelderExponents {
    let nf = n as f64;
    if !(alpha > 0.0) || !(beta > 0.0) || n == 0 {
        return HoelderExponents { delta: 0.0, eps: 0.0, gamma: 0.0, degenerate: true };
    }
    let delta = if alpha.is_infinite() { 1.0 } else { alpha / (nf + alpha) };
    let eps = beta / nf;
    let gamma = (delta * beta / nf).min(beta - eps * nf / 2.0);
    HoelderExponents { delta, eps, gamma, degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        let h = hoelder_combine(2.0, 0.5, 2);
        assert_relative_eq!(h.delta, 0.5);
        assert_relative_eq!(h.gamma, 0.125);
        let h = hoelder_combine(f64::INFINITY, 0.6, 3);
        assert_relative_eq!(h.gamma, 0.2);
        let h = hoelder_combine(1e12, 0.6, 1);
        assert_relative_eq!(h.gamma, 0.3, epsilon = 1e-9);
        let h = hoelder_combine(1.0, 0.0, 2);
        assert!(h.degenerate);
        assert_eq!(h.gamma, 0.0);
    }
}
