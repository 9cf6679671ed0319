//! Dispersion thresholds, admissible noise levels and integrability caps.

use crate::error::{PnlError, Result};

use super::mu::mu_trunc;

fn check_lambdas(lambda0: f64, lambda1: f64) -> Result<()> {
    if !(lambda0 > 0.0 && lambda0 <= lambda1 && lambda1.is_finite()) {
        return Err(PnlError::InvalidEllipticity(format!(
            "need 0 < lambda0 <= lambda1, got ({lambda0}, {lambda1})"
        )));
    }
    Ok(())
}

/// `lambda0 / lambda1 > 1 - 2/n`: the parabolic dispersion condition.
pub fn dispersion_ok_parabolic(lambda0: f64, lambda1: f64, n: usize) -> Result<bool> {
    check_lambdas(lambda0, lambda1)?;
    Ok(lambda0 / lambda1 > 1.0 - 2.0 / n as f64)
}

/// `((lambda1 - lambda0) / (lambda1 + lambda0)) sqrt(1 + (n-2)^2 / (n-1))`.
pub fn elliptic_dispersion(lambda0: f64, lambda1: f64, n: usize) -> Result<f64> {
    check_lambdas(lambda0, lambda1)?;
    if n < 2 {
        return Err(PnlError::Domain("the elliptic condition needs n >= 2".into()));
    }
    let nf = n as f64;
    let spread = (lambda1 - lambda0) / (lambda1 + lambda0);
    Ok(spread * (1.0 + (nf - 2.0).powi(2) / (nf - 1.0)).sqrt())
}

/// The elliptic dispersion quantity is below one.
pub fn dispersion_ok_elliptic(lambda0: f64, lambda1: f64, n: usize) -> Result<bool> {
    Ok(elliptic_dispersion(lambda0, lambda1, n)? < 1.0)
}

/// Largest Lipschitz constant of the noise admissible at exponent `q`:
/// `sqrt( (sqrt(mu(q)) - sqrt(1 - nu^2)) / (kappa (q - 1/2)) )`.
///
/// Returns 0 where the bracket is not positive (no admissible noise).
pub fn lh_star_q(q: f64, kappa: f64, nu: f64) -> f64 {
    if !(q >= 1.0) || !(kappa > 0.0) || !(0.0..=1.0).contains(&nu) {
        return 0.0;
    }
    let Ok(mu) = mu_trunc(q) else { return 0.0 };
    let bracket = mu.sqrt() - (1.0 - nu * nu).sqrt();
    if bracket <= 0.0 {
        return 0.0;
    }
    (bracket / (kappa * (q - 0.5))).sqrt()
}

/// `sqrt( 2/(kappa (n-1)) (sqrt(1 - ((n-2)/n)^2) - sqrt(1 - nu^2)) )`, the
/// noise cap of the regularity theorem; equals `lh_star_q(n/2, ..)`.
pub fn lh_star_n(n: usize, kappa: f64, nu: f64) -> f64 {
    if n < 2 || !(kappa > 0.0) || !(0.0..=1.0).contains(&nu) {
        return 0.0;
    }
    let nf = n as f64;
    let r = (nf - 2.0) / nf;
    let bracket = (1.0 - r * r).sqrt() - (1.0 - nu * nu).sqrt();
    if bracket <= 0.0 {
        return 0.0;
    }
    (2.0 / (kappa * (nf - 1.0)) * bracket).sqrt()
}

/// Exponent `q >= 1` at which [`lh_star_q`] drops to `lh`; `+inf` when it
/// never does. For `lh = 0` this is `1 / (1 - nu)`.
pub fn lh_star_inverse(lh: f64, kappa: f64, nu: f64) -> f64 {
    if lh <= 0.0 {
        return if nu >= 1.0 { f64::INFINITY } else { 1.0 / (1.0 - nu) };
    }
    if lh_star_q(1.0, kappa, nu) <= lh {
        return 1.0;
    }
    let mut lo = 1.0;
    let mut hi = if nu >= 1.0 { 2.0 } else { 1.0 / (1.0 - nu) };
    if nu >= 1.0 {
        while lh_star_q(hi, kappa, nu) > lh {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lh_star_q(mid, kappa, nu) > lh {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `min{ p(n+2)/n, 1 + p(n+2)/n (a-4)/a, (a-2)/2 }`.
pub fn admissible_q_bound(p: f64, n: usize, a: f64) -> f64 {
    let gain = p * (n as f64 + 2.0) / n as f64;
    let damped = if a.is_infinite() { 1.0 + gain } else { 1.0 + gain * (a - 4.0) / a };
    let cap = if a.is_infinite() { f64::INFINITY } else { (a - 2.0) / 2.0 };
    gain.min(damped).min(cap)
}

/// `(lambda0 + sigma^2/2) / (lambda1 + sigma^2/2)`: dispersion ratio of the
/// drift after the Stratonovich shift.
pub fn shifted_dispersion_ratio(lambda0: f64, lambda1: f64, sigma: f64) -> f64 {
    let shift = 0.5 * sigma * sigma;
    (lambda0 + shift) / (lambda1 + shift)
}

/// Smallest `sigma0 >= 0` such that every `sigma > sigma0` lifts the shifted
/// ratio above `1 - 2/n`: `sqrt(max(0, (n-2) lambda1 - n lambda0))`.
pub fn sigma_zero(lambda0: f64, lambda1: f64, n: usize) -> Result<f64> {
    check_lambdas(lambda0, lambda1)?;
    let nf = n as f64;
    Ok(((nf - 2.0) * lambda1 - nf * lambda0).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parabolic_examples() {
        assert!(dispersion_ok_parabolic(1.0, 2.0, 3).unwrap());
        assert!(!dispersion_ok_parabolic(1.0, 4.0, 3).unwrap());
        for n in 1..10 {
            assert!(dispersion_ok_parabolic(2.5, 2.5, n).unwrap());
        }
        assert!(dispersion_ok_parabolic(2.0, 1.0, 3).is_err());
    }

    #[test]
    fn elliptic_examples() {
        assert_eq!(elliptic_dispersion(3.0, 3.0, 5).unwrap(), 0.0);
        let v = elliptic_dispersion(1.0, 4.0, 3).unwrap();
        assert_relative_eq!(v, 0.6 * 1.5f64.sqrt(), epsilon = 1e-12);
        assert!(dispersion_ok_elliptic(1.0, 4.0, 3).unwrap());
        let v = elliptic_dispersion(1.0, 100.0, 10).unwrap();
        assert_relative_eq!(v, 99.0 / 101.0 * (1.0f64 + 64.0 / 9.0).sqrt(), epsilon = 1e-12);
        assert!(!dispersion_ok_elliptic(1.0, 100.0, 10).unwrap());
    }

    #[test]
    fn lh_star_examples() {
        assert_relative_eq!(lh_star_n(3, 1.0, 1.0).powi(2), (8.0f64 / 9.0).sqrt(), epsilon = 1e-14);
        assert_eq!(lh_star_n(4, 1.0, 0.5), 0.0);
        assert_eq!(lh_star_q(2.0, 1.0, 0.5), 0.0);
        assert!(lh_star_q(1.9, 1.0, 0.5) > 0.0);
        for n in 2..12 {
            for nu in [0.3, 0.7, 0.95, 1.0] {
                let a = lh_star_n(n, 1.3, nu);
                let b = lh_star_q(n as f64 / 2.0, 1.3, nu);
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.max(1.0), "{n} {nu}: {a} {b}");
            }
        }
    }

    #[test]
    fn lh_star_inverse_matches() {
        assert_relative_eq!(lh_star_inverse(0.0, 1.0, 0.95), 20.0, epsilon = 1e-12);
        assert!(lh_star_inverse(0.0, 1.0, 1.0).is_infinite());
        let q = lh_star_inverse(0.3, 1.0, 0.9);
        assert_relative_eq!(lh_star_q(q, 1.0, 0.9), 0.3, epsilon = 1e-9);
        let q = lh_star_inverse(0.2, 2.0, 1.0);
        assert_relative_eq!(lh_star_q(q, 2.0, 1.0), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn admissible_bound_examples() {
        assert_relative_eq!(admissible_q_bound(1.0, 3, 6.0), 14.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(admissible_q_bound(2.0, 4, f64::INFINITY), 3.0, epsilon = 1e-14);
        for n in 1..8 {
            assert_relative_eq!(admissible_q_bound(1.0, n, 4.0), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sigma_zero_examples() {
        assert_eq!(sigma_zero(1.0, 4.0, 3).unwrap(), 1.0);
        assert_eq!(shifted_dispersion_ratio(1.0, 4.0, 1.0), 1.0 / 3.0);
        assert_eq!(sigma_zero(1.0, 2.0, 3).unwrap(), 0.0);
        for n in 1..9 {
            assert_eq!(sigma_zero(2.0, 2.0, n).unwrap(), 0.0);
        }
        let s0 = sigma_zero(1.0, 10.0, 5).unwrap();
        let threshold = 1.0 - 2.0 / 5.0;
        assert!(shifted_dispersion_ratio(1.0, 10.0, s0 * 1.001) > threshold);
        assert!(shifted_dispersion_ratio(1.0, 10.0, s0 * 0.999) < threshold);
    }
}
