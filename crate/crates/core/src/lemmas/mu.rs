use crate::error::{PnlError, Result};

/// Angle factor of the power map `v = u |u|^s`: `1 - (s / (2 + s))^2`.
pub fn mu_power(s: f64) -> Result<f64> {
    if !(s > -1.0) || !s.is_finite() {
        return Err(PnlError::Domain(format!("mu_power needs s > -1, got {s}")));
    }
    let r = s / (2.0 + s);
    Ok(1.0 - r * r)
}

/// Angle factor of the truncated power family: `1 - ((q - 1) / q)^2`.
pub fn mu_trunc(q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(PnlError::Domain(format!("mu_trunc needs q >= 1, got {q}")));
    }
    let r = (q - 1.0) / q;
    Ok(1.0 - r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        assert_eq!(mu_power(0.0).unwrap(), 1.0);
        assert_relative_eq!(mu_power(2.0).unwrap(), 0.75);
        assert_relative_eq!(mu_power(-0.5).unwrap(), 8.0 / 9.0);
        assert_eq!(mu_trunc(1.0).unwrap(), 1.0);
        assert_relative_eq!(mu_trunc(2.0).unwrap(), 0.75);
        assert_relative_eq!(mu_trunc(3.0).unwrap(), 5.0 / 9.0);
    }

    #[test]
    fn domain_errors() {
        assert!(mu_power(-1.0).is_err());
        assert!(mu_power(f64::NAN).is_err());
        assert!(mu_trunc(0.99).is_err());
    }

    #[test]
    fn range() {
        for i in 0..200 {
            let s = -0.99 + i as f64 * 0.37;
            let m = mu_power(s).unwrap();
            assert!(m > 0.0 && m <= 1.0);
        }
    }
}
