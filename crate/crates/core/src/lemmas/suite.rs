//! Randomized property suites over the closed-form lemmas.
//!
//! Every suite draws from its own seeded stream, so a report depends only on
//! the configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use super::mu::{mu_power, mu_trunc};
use super::schedule::{iteration_schedule, q_max};
use super::thresholds::{
    dispersion_ok_elliptic, dispersion_ok_parabolic, lh_star_n, lh_star_q, shifted_dispersion_ratio, sigma_zero,
};
use super::truncation::{power_pair, truncation_pair, TruncationFamily};

/// Violations kept verbatim per suite; the rest are only counted.
const KEPT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub draws: usize,
    pub seed: u64,
    pub qs: Vec<f64>,
    pub ks: Vec<f64>,
    pub ss: Vec<f64>,
    pub n: usize,
    pub components: usize,
    pub slack: f64,
    /// Negative control: check the angle inequalities against `mu = 1`.
    pub force_wrong_mu: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            draws: 10_000,
            seed: 0,
            qs: vec![1.0, 1.5, 2.0, 3.0, 5.0],
            ks: vec![0.5, 1.0, 2.0],
            ss: vec![-0.5, 0.5, 1.0, 2.0],
            n: 3,
            components: 3,
            slack: 1e-10,
            force_wrong_mu: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub params: Value,
    pub sample: Value,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: usize,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport { suite: name.into(), checks: 0, violation_count: 0, violations: Vec::new(), passed: true }
    }

    fn check(&mut self, ok: bool, violation: impl FnOnce() -> Violation) {
        self.checks += 1;
        if !ok {
            self.violation_count += 1;
            self.passed = false;
            if self.violations.len() < KEPT {
                self.violations.push(violation());
            }
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `u` with `|u| >= 1e-8` and magnitude spread over `center * 10^[-1, 1]`.
fn draw_u(rng: &mut ChaCha8Rng, nc: usize, center: f64) -> Vec<f64> {
    loop {
        let scale = center * 10f64.powf(rng.gen_range(-1.0..1.0));
        let u = gaussian_vec(rng, nc, scale);
        if u.iter().map(|v| v * v).sum::<f64>().sqrt() >= 1e-8 {
            return u;
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Angle inequality, lower bound on `|Dv|`, `C^2` matching at `K` and the
/// growth bounds of the truncated family.
pub fn truncation_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("truncation");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, nc, slack) = (cfg.n, cfg.components, cfg.slack);
    for &q in &cfg.qs {
        for &k in &cfg.ks {
            let params = json!({"q": q, "K": k});
            let fam = match TruncationFamily::new(q, k) {
                Ok(f) => f,
                Err(e) => {
                    rep.check(false, || Violation {
                        check: "construct".into(),
                        params: params.clone(),
                        sample: Value::Null,
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            let (below, above) = (fam.power_branch(k), fam.quadratic_branch(k));
            for (name, x, y) in [
                ("C0 at K", below.value, above.value),
                ("C1 at K", below.first, above.first),
                ("C2 at K", below.second, above.second),
            ] {
                rep.check(rel_close(x, y, slack), || Violation {
                    check: name.into(),
                    params: params.clone(),
                    sample: json!({"power": x, "quadratic": y}),
                    detail: format!("relative gap {:e}", (x - y).abs() / x.abs().max(y.abs())),
                });
            }
            let mu = mu_trunc(q).expect("q >= 1");
            let c = fam.growth_constant();
            for _ in 0..cfg.draws {
                let u = draw_u(&mut rng, nc, k);
                let mag = 10f64.powf(rng.gen_range(-2.0..2.0));
                let du = gaussian_vec(&mut rng, n * nc, mag);
                let r = truncation_pair(&fam, &u, &du).expect("u is nonzero");
                let rhs = if cfg.force_wrong_mu { r.rhs / mu.sqrt() } else { r.rhs };
                rep.check(r.lhs >= rhs - slack * rhs.abs(), || Violation {
                    check: "angle".into(),
                    params: params.clone(),
                    sample: json!({"u": u, "Du": du}),
                    detail: format!("Du.Dv = {:e} < {:e}", r.lhs, rhs),
                });
                rep.check(r.dv_norm >= r.dv_lower - slack * r.dv_lower.max(1.0), || Violation {
                    check: "Dv lower bound".into(),
                    params: params.clone(),
                    sample: json!({"u": u, "Du": du}),
                    detail: format!("|Dv| = {:e} < {:e}", r.dv_norm, r.dv_lower),
                });

                let t = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d = fam.eval(t);
                let tilt = d.second * t - d.first;
                let scale = d.first.abs().max(f64::MIN_POSITIVE);
                rep.check(tilt >= -slack * scale && tilt <= 2.0 * (q - 1.0) * d.first + slack * scale, || Violation {
                    check: "T'' t - T' in [0, 2(q-1) T']".into(),
                    params: params.clone(),
                    sample: json!({"t": t}),
                    detail: format!("T'' t - T' = {tilt:e}, T' = {:e}", d.first),
                });
                let total = d.value + d.first * t + d.second * t * t;
                let envelope = c * (k.powf(2.0 * q - 2.0) * t * t).min(t.powf(2.0 * q));
                rep.check(total <= envelope * (1.0 + slack), || Violation {
                    check: "T + T' t + T'' t^2 <= c(q) min{..}".into(),
                    params: params.clone(),
                    sample: json!({"t": t}),
                    detail: format!("{total:e} > {envelope:e}"),
                });
            }
        }
    }
    rep
}

/// Angle inequality of `v = u |u|^s`.
pub fn power_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("power");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    for &s in &cfg.ss {
        let params = json!({"s": s});
        let mu = match mu_power(s) {
            Ok(m) => m,
            Err(e) => {
                rep.check(false, || Violation {
                    check: "mu".into(),
                    params: params.clone(),
                    sample: Value::Null,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        for _ in 0..cfg.draws {
            let u = draw_u(&mut rng, cfg.components, 1.0);
            let mag = 10f64.powf(rng.gen_range(-2.0..2.0));
            let du = gaussian_vec(&mut rng, cfg.n * cfg.components, mag);
            let r = power_pair(s, &u, &du).expect("u is nonzero");
            let rhs = if cfg.force_wrong_mu { r.rhs / mu.sqrt() } else { r.rhs };
            rep.check(r.lhs >= rhs - cfg.slack * rhs.abs(), || Violation {
                check: "angle".into(),
                params: params.clone(),
                sample: json!({"u": u, "Du": du}),
                detail: format!("Du.Dv = {:e} < {:e}", r.lhs, rhs),
            });
        }
    }
    rep
}

/// `mu_trunc(q) = mu_power(2(q - 1))` on random `q` in `[1, 50]`.
pub fn mu_identity_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("mu-identity");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4d55);
    for _ in 0..1000 {
        let q: f64 = rng.gen_range(1.0..50.0);
        let a = mu_trunc(q).expect("q >= 1");
        let b = mu_power(2.0 * (q - 1.0)).expect("s >= 0");
        rep.check(rel_close(a, b, 1e-12), || Violation {
            check: "identity".into(),
            params: json!({"q": q}),
            sample: json!({"mu_trunc": a, "mu_power": b}),
            detail: format!("gap {:e}", (a - b).abs()),
        });
    }
    rep
}

/// Admissibility scan with `L_H = 0`, the `n = 3, a = 6` schedule and the
/// consistency of the two noise caps.
pub fn schedule_suite(_cfg: &SuiteConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("schedule");
    let (nq, nnu) = (40, 25);
    for i in 0..nq {
        for j in 0..nnu {
            let q = 1.0 + 19.0 * (i as f64 + 0.5) / nq as f64;
            let nu = (j as f64 + 0.5) / nnu as f64;
            let admissible = lh_star_q(q, 1.0, nu) > 0.0;
            let expected = q < 1.0 / (1.0 - nu);
            rep.check(admissible == expected, || Violation {
                check: "L_H = 0 admissibility".into(),
                params: json!({"q": q, "nu": nu}),
                sample: Value::Null,
                detail: format!("admissible = {admissible}, q < 1/(1-nu) = {expected}"),
            });
        }
    }
    let qm = q_max(3, 6.0);
    rep.check(qm == 2.25, || Violation {
        check: "q_max(3, 6)".into(),
        params: json!({"n": 3, "a": 6}),
        sample: json!(qm),
        detail: "expected 2.25".into(),
    });
    let s = iteration_schedule(3, 6.0, 0.95, 1.0, 0.0, 0.0);
    let ok = s.admissible
        && s.q_star > 1.5
        && s.q_star < 2.0
        && s.steps > 0
        && s.qs.windows(2).all(|w| w[1] > w[0])
        && s.qs.iter().all(|q| q.is_finite());
    rep.check(ok, || Violation {
        check: "schedule n=3 a=6 nu=0.95".into(),
        params: json!({"n": 3, "a": 6, "nu": 0.95, "kappa": 1, "lh": 0}),
        sample: json!(s.qs),
        detail: format!("q* = {}, admissible = {}", s.q_star, s.admissible),
    });
    for n in 2..=8usize {
        for nu in [0.8, 0.9, 0.95, 1.0] {
            if nu <= (n as f64 - 2.0) / n as f64 {
                continue;
            }
            let (a, b) = (lh_star_n(n, 1.0, nu), lh_star_q(n as f64 / 2.0, 1.0, nu));
            rep.check(rel_close(a, b, 1e-14), || Violation {
                check: "lh_star_n = lh_star_q(n/2)".into(),
                params: json!({"n": n, "nu": nu}),
                sample: json!({"lh_star_n": a, "lh_star_q": b}),
                detail: format!("gap {:e}", (a - b).abs()),
            });
        }
    }
    rep
}

/// Dispersion predicates and the critical noise level on hand-computed cases.
pub fn thresholds_suite(_cfg: &SuiteConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("thresholds");
    let mut expect = |name: &str, ok: bool, detail: String| {
        rep.check(ok, || Violation { check: name.into(), params: Value::Null, sample: Value::Null, detail });
    };
    expect("parabolic(1,2,3)", dispersion_ok_parabolic(1.0, 2.0, 3).unwrap_or(false), "expected true".into());
    expect("parabolic(1,4,3)", !dispersion_ok_parabolic(1.0, 4.0, 3).unwrap_or(true), "expected false".into());
    let s0 = sigma_zero(1.0, 4.0, 3).unwrap_or(f64::NAN);
    expect("sigma_zero(1,4,3)", s0 == 1.0, format!("got {s0}"));
    let ratio = shifted_dispersion_ratio(1.0, 4.0, 1.0);
    expect("(1 + 1/2)/(4 + 1/2) = 1/3", ratio == 1.0 / 3.0, format!("got {ratio}"));
    let hand = 0.6 * 1.5f64.sqrt();
    let value = super::thresholds::elliptic_dispersion(1.0, 4.0, 3).unwrap_or(f64::NAN);
    expect("elliptic(1,4,3)", (value - hand).abs() <= 1e-12, format!("{value} vs {hand}"));
    expect("elliptic(1,4,3) holds", dispersion_ok_elliptic(1.0, 4.0, 3).unwrap_or(false), "expected true".into());
    let hand = 99.0 / 101.0 * (1.0f64 + 64.0 / 9.0).sqrt();
    let value = super::thresholds::elliptic_dispersion(1.0, 100.0, 10).unwrap_or(f64::NAN);
    expect("elliptic(1,100,10)", (value - hand).abs() <= 1e-12, format!("{value} vs {hand}"));
    expect("elliptic(1,100,10) fails", !dispersion_ok_elliptic(1.0, 100.0, 10).unwrap_or(true), "expected false".into());
    rep
}

pub const SUITE_NAMES: [&str; 5] = ["truncation", "power", "mu-identity", "schedule", "thresholds"];

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Option<SuiteReport> {
    Some(match name {
        "truncation" => truncation_suite(cfg),
        "power" => power_suite(cfg),
        "mu-identity" => mu_identity_suite(cfg),
        "schedule" => schedule_suite(cfg),
        "thresholds" => thresholds_suite(cfg),
        _ => return None,
    })
}

pub fn run_all(cfg: &SuiteConfig) -> Vec<SuiteReport> {
    SUITE_NAMES.iter().map(|n| run_suite(n, cfg).expect("known suite")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let cfg = SuiteConfig { draws: 500, ..Default::default() };
        for rep in run_all(&cfg) {
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn wrong_mu_is_caught() {
        let cfg = SuiteConfig { draws: 200, force_wrong_mu: true, ..Default::default() };
        assert!(!truncation_suite(&cfg).passed);
        assert!(!power_suite(&cfg).passed);
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = SuiteConfig { draws: 100, seed: 5, force_wrong_mu: true, ..Default::default() };
        let a = serde_json::to_string(&truncation_suite(&cfg)).unwrap();
        let b = serde_json::to_string(&truncation_suite(&cfg)).unwrap();
        assert_eq!(a, b);
    }
}
