//! The bootstrap of gradient integrability exponents `q_j` up to a cap `q*`
//! beyond `n/2`.

use serde::Serialize;

use super::thresholds::{admissible_q_bound, lh_star_inverse, lh_star_n, lh_star_q};

/// Hard limit on recursion steps; the recursion gains at least a fixed
/// fraction per step, so this is never reached for admissible inputs.
const MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSchedule {
    pub n: usize,
    pub a: f64,
    pub nu: f64,
    pub kappa: f64,
    pub lh: f64,
    /// `q_0 = 1, q_1, ...`, ending with `q_star`; empty when inadmissible.
    pub qs: Vec<f64>,
    pub q_max: f64,
    pub q_star: f64,
    pub steps: usize,
    pub admissible: bool,
    /// Why the schedule is inadmissible, if it is.
    pub reason: Option<String>,
}

/// `na / (4(n+2) - 2a)` when `a < 2(n+2)`, `+inf` otherwise.
pub fn q_max(n: usize, a: f64) -> f64 {
    let nf = n as f64;
    if a < 2.0 * (nf + 2.0) {
        nf * a / (4.0 * (nf + 2.0) - 2.0 * a)
    } else {
        f64::INFINITY
    }
}

/// One recursion step:
/// `min{ q (n+2)/n, 1 + q (n+2)/n (a-4)/a, (a-2)/2, q + 1 }`.
pub fn next_exponent(q: f64, n: usize, a: f64) -> f64 {
    admissible_q_bound(q, n, a).min(q + 1.0)
}

/// Runs the exponent recursion from `q_0 = 1`.
///
/// `q*` is placed at `lo + (1/2 + margin)(hi - lo)` inside the admissible
/// interval `(n/2, hi)` with `hi = min{ q(L_H), (a-2)/2, q_max }`, where
/// `q(L_H)` inverts [`lh_star_q`]. `margin` must lie in `(-1/2, 1/2)`.
pub fn iteration_schedule(n: usize, a: f64, nu: f64, kappa: f64, lh: f64, margin: f64) -> IterationSchedule {
    let nf = n as f64;
    let mut out = IterationSchedule {
        n,
        a,
        nu,
        kappa,
        lh,
        qs: Vec::new(),
        q_max: q_max(n, a),
        q_star: f64::NAN,
        steps: 0,
        admissible: false,
        reason: None,
    };
    let reject = |mut s: IterationSchedule, why: String| {
        s.reason = Some(why);
        s
    };
    if n < 2 {
        return reject(out, "dimension must be at least 2".into());
    }
    if !(kappa > 0.0) || !(nu > 0.0 && nu <= 1.0) || !(lh >= 0.0) {
        return reject(out, format!("need kappa > 0, nu in (0,1], L_H >= 0; got {kappa}, {nu}, {lh}"));
    }
    if !(margin > -0.5 && margin < 0.5) {
        return reject(out, format!("margin {margin} outside (-1/2, 1/2)"));
    }
    if !(a > nf + 2.0) {
        return reject(out, format!("integrability exponent a = {a} must exceed n + 2 = {}", nf + 2.0));
    }
    if nu <= (nf - 2.0) / nf {
        return reject(out, format!("nu = {nu} must exceed (n-2)/n = {}", (nf - 2.0) / nf));
    }
    let cap = lh_star_n(n, kappa, nu);
    if lh >= cap {
        return reject(out, format!("L_H = {lh} must be below L_H*(n) = {cap}"));
    }
    let lo = nf / 2.0;
    let hi = lh_star_inverse(lh, kappa, nu).min((a - 2.0) / 2.0).min(out.q_max);
    if !(hi > lo) {
        return reject(out, format!("empty exponent interval ({lo}, {hi})"));
    }
    let q_star = lo + (0.5 + margin) * (hi - lo);

    let mut q = 1.0;
    out.qs.push(q);
    loop {
        let next = next_exponent(q, n, a);
        if next >= q_star || !(next > q) || lh_star_q(next, kappa, nu) <= lh {
            out.qs.push(q_star);
            break;
        }
        out.qs.push(next);
        q = next;
        if out.qs.len() > MAX_STEPS {
            return reject(out, "recursion did not reach q*".into());
        }
    }
    out.steps = out.qs.len() - 1;
    out.q_star = q_star;
    out.admissible = true;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn q_max_example() {
        assert_eq!(q_max(3, 6.0), 2.25);
        assert!(q_max(3, 10.0).is_infinite());
    }

    #[test]
    fn reference_schedule() {
        let s = iteration_schedule(3, 6.0, 0.95, 1.0, 0.0, 0.0);
        assert!(s.admissible);
        assert_relative_eq!(s.q_star, 1.75, epsilon = 1e-12);
        assert!(s.q_star > 1.5 && s.q_star < 2.0);
        assert_eq!(s.qs.len(), 3);
        assert_relative_eq!(s.qs[1], 14.0 / 9.0, epsilon = 1e-12);
        assert!(s.qs.windows(2).all(|w| w[1] > w[0]));
        for w in s.qs.windows(2) {
            assert!(w[1] <= admissible_q_bound(w[0], 3, 6.0) + 1e-12);
        }
    }

    #[test]
    fn inadmissible_inputs() {
        assert!(!iteration_schedule(3, 6.0, 1.0 / 3.0, 1.0, 0.0, 0.0).admissible);
        assert!(!iteration_schedule(3, 5.0, 0.95, 1.0, 0.0, 0.0).admissible);
        assert!(!iteration_schedule(3, 6.0, 0.95, 1.0, 10.0, 0.0).admissible);
        let s = iteration_schedule(3, 6.0, 0.2, 1.0, 0.0, 0.0);
        assert!(s.qs.is_empty() && s.reason.is_some());
    }

    #[test]
    fn large_dimension_terminates() {
        let s = iteration_schedule(12, 40.0, 0.99, 1.0, 0.01, 0.1);
        assert!(s.admissible, "{:?}", s.reason);
        assert!(*s.qs.last().unwrap() > 6.0);
        for w in s.qs.windows(2) {
            assert!(w[1] > w[0]);
            assert!(lh_star_q(w[1], 1.0, 0.99) > 0.01);
        }
    }
}
