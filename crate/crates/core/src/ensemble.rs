//! Monte Carlo ensembles over Brownian paths and the weighted energy monitors.
//!
//! Paths are grouped into fixed chunks of consecutive indices. Each chunk
//! accumulates moments with Welford updates in index order, and chunks are
//! merged in chunk order afterwards, so the result does not depend on how
//! many workers ran the chunks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{PnlError, Result};
use crate::field::{gradient, lp_integral, lp_norm, lp_norm_region, trapezoid, Field, GridSpec, Region, Trajectory};
use crate::sde::{sample_brownian, simulate, BlowUp, SimConfig};

pub const DEFAULT_CHUNK: usize = 64;

fn power_norm(f: &Field, p: f64, region: Option<&Region>) -> Result<f64> {
    let norm = match region {
        Some(r) => lp_norm_region(f, p, r)?,
        None => lp_norm(f, p)?,
    };
    Ok(norm.powf(p))
}

fn check_a(n: usize, a: f64) -> Result<()> {
    if !(a > n as f64 + 2.0) {
        return Err(PnlError::Domain(format!("integrability exponent a = {a} must exceed n + 2 = {}", n + 2)));
    }
    Ok(())
}

/// `1 + ||u||^{2(n+2)/n}_{L^{2(n+2)/n}} + ||f||^a_{L^a}`, with `f = 0` when absent.
pub fn weight_g0(u: &Field, f: Option<&Field>, n: usize, a: f64) -> Result<f64> {
    check_a(n, a)?;
    let m = 2.0 * (n as f64 + 2.0) / n as f64;
    let mut g = 1.0 + power_norm(u, m, None)?;
    if let Some(f) = f {
        g += power_norm(f, a, None)?;
    }
    Ok(g)
}

/// `G0 + ||Du||^2_{L^2}`.
pub fn weight_gprime(u: &Field, grad: &Field, f: Option<&Field>, n: usize, a: f64) -> Result<f64> {
    Ok(weight_g0(u, f, n, a)? + power_norm(grad, 2.0, None)?)
}

/// Inputs of the third weight besides the fields themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsecondParams {
    /// Value of the previous weight `G_p(s)`.
    pub g_p: f64,
    pub p: f64,
    /// The exponent being reached from `p`.
    pub q: f64,
    pub c: f64,
}

/// `(2q/c) G_p + 1 + ||Du||^{2p(n+2)/n}_{L(D')} + ||u||^{2p((n+2)/n)^2}_{L(D')} + ||f||^a_{L^a}`,
/// with the first two norms taken over `region` (the whole grid when `None`).
pub fn weight_gsecond(
    u: &Field,
    grad: &Field,
    f: Option<&Field>,
    params: GsecondParams,
    n: usize,
    a: f64,
    region: Option<&Region>,
) -> Result<f64> {
    check_a(n, a)?;
    let GsecondParams { g_p, p, q, c } = params;
    if !(p >= 1.0) || !(c > 0.0) || !(q > 0.0) {
        return Err(PnlError::Domain(format!("need p >= 1, q > 0, c > 0 (got p = {p}, q = {q}, c = {c})")));
    }
    let r = (n as f64 + 2.0) / n as f64;
    let mut g = 2.0 * q / c * g_p + 1.0 + power_norm(grad, 2.0 * p * r, region)? + power_norm(u, 2.0 * p * r * r, region)?;
    if let Some(f) = f {
        g += power_norm(f, a, None)?;
    }
    Ok(g)
}

/// `Y(t) = exp(-int_0^t c G ds)` on the sample times of `G`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightCurve {
    pub c: f64,
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub y: Vec<f64>,
}

impl WeightCurve {
    pub fn new(c: f64, times: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if times.len() != g.len() || times.is_empty() {
            return Err(PnlError::ShapeMismatch("weight samples and times differ in length".into()));
        }
        if !(c >= 0.0) || g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(PnlError::Domain("weights need c >= 0 and finite G >= 0".into()));
        }
        let mut y = Vec::with_capacity(g.len());
        let mut integral = 0.0;
        y.push(1.0);
        for k in 1..g.len() {
            integral += 0.5 * (times[k] - times[k - 1]) * (g[k] + g[k - 1]);
            y.push((-c * integral).exp());
        }
        Ok(WeightCurve { c, times, g, y })
    }

    /// `Y = 1` on `times`.
    pub fn unit(times: Vec<f64>) -> Self {
        let ones = vec![1.0; times.len()];
        WeightCurve { c: 0.0, times, g: ones.clone(), y: ones }
    }
}

/// `(max_t Y ||u(t)||^2_{L^2(R)}, int_0^T Y ||Du(t)||^2_{L^2(R)} dt)`.
pub fn weighted_energy(traj: &Trajectory, weights: &WeightCurve, region: &Region) -> Result<(f64, f64)> {
    region.validate(traj.grid())?;
    if weights.times.len() != traj.len()
        || weights.times.iter().zip(traj.times()).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(PnlError::ShapeMismatch("weights were sampled on a different time grid".into()));
    }
    let mut sup: f64 = 0.0;
    let mut dissipation = Vec::with_capacity(traj.len());
    for (frame, y) in traj.frames().iter().zip(&weights.y) {
        sup = sup.max(y * lp_norm_region(frame, 2.0, region)?.powi(2));
        dissipation.push(y * lp_norm_region(&gradient(frame), 2.0, region)?.powi(2));
    }
    Ok((sup, trapezoid(traj.times(), &dissipation)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub chunk: usize,
    /// Constant in the weight `Y = exp(-int c G0)`.
    pub c0: f64,
    /// Whether to compute per-path energy and weight curves.
    pub observables: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { workers: 1, chunk: DEFAULT_CHUNK, c0: 1.0, observables: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_index: u64,
    pub master_seed: u64,
    pub blow_up: Option<BlowUp>,
    /// `||u(t)||^2_{L^2}` per recorded frame.
    pub energy_curve: Vec<f64>,
    pub g0_curve: Vec<f64>,
    /// Weighted energy `(sup, integral)` with `Y = exp(-int c0 G0)`.
    pub weighted_energy: Option<(f64, f64)>,
    /// Weighted energy divided by `||u0||^2 + 1 + int ||f_H||^2`.
    pub apriori_ratio: Option<f64>,
    pub solver_iterations: usize,
}

impl PathRecord {
    /// One NDJSON line; `blow_up` is `false` or the step at which it happened.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "path_index": self.path_index,
            "seed": self.master_seed,
            "blow_up": match self.blow_up {
                Some(b) => json!(b.step),
                None => json!(false),
            },
            "energy_curve": self.energy_curve,
            "G0_curve": self.g0_curve,
            "weighted_energy": self.weighted_energy.map(|(s, i)| json!({"sup": s, "integral": i})),
            "apriori_ratio": self.apriori_ratio,
            "solver_iterations": self.solver_iterations,
        })
    }
}

pub fn write_ndjson<W: Write>(records: &[PathRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &r.to_json())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Paths requested.
    pub m: usize,
    /// Paths entering the moments (those without blow-up).
    pub used: usize,
    pub mean: Trajectory,
    pub second_moment: Trajectory,
    /// Standard error of the mean, `sqrt(s^2 / used)` with the unbiased `s^2`.
    pub standard_error: Trajectory,
    pub per_path: Vec<PathRecord>,
}

impl EnsembleResult {
    /// `E[u^2] - E[u]^2` per frame.
    pub fn variance(&self) -> Vec<Field> {
        self.mean
            .frames()
            .iter()
            .zip(self.second_moment.frames())
            .map(|(m, s)| {
                let v = s.values().iter().zip(m.values()).map(|(s, m)| s - m * m).collect();
                Field::new(m.grid().clone(), m.components(), v).expect("finite moments")
            })
            .collect()
    }

    pub fn blow_ups(&self) -> usize {
        self.per_path.iter().filter(|r| r.blow_up.is_some()).count()
    }
}

/// Streaming mean and centred second moment over a block of values.
#[derive(Debug, Clone)]
struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: impl Iterator<Item = f64>) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / c;
            *s += delta * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }
}

struct Shared<'a> {
    cfg: &'a SimConfig,
    times: Vec<f64>,
    dim: usize,
    seed: u64,
    opts: EnsembleOptions,
    forcing: Vec<Option<Field>>,
    apriori_denominator: f64,
}

fn sample_scalar(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
    Field::from_fn(grid, 1, |x, out| out[0] = f(x))
}

/// Energy curve, `G0` curve and the optional `(sup, integral)` weighted energy.
type Observed = (Vec<f64>, Vec<f64>, Option<(f64, f64)>);

fn observe(shared: &Shared, frames: &[Field], times: &[f64]) -> Result<Observed> {
    let n = shared.cfg.grid.dim();
    let a = shared.cfg.model.params().a;
    let energy = frames.iter().map(|f| Ok(lp_norm(f, 2.0)?.powi(2))).collect::<Result<Vec<_>>>()?;
    let g0 = frames
        .iter()
        .zip(&shared.forcing)
        .map(|(u, f)| weight_g0(u, f.as_ref(), n, a))
        .collect::<Result<Vec<_>>>()?;
    let weighted = if frames.len() >= 2 {
        let traj = Trajectory::new(times.to_vec(), frames.to_vec())?;
        let curve = WeightCurve::new(shared.opts.c0, times.to_vec(), g0.clone())?;
        Some(weighted_energy(&traj, &curve, &Region::full(&shared.cfg.grid))?)
    } else {
        None
    };
    Ok((energy, g0, weighted))
}

fn run_chunk(shared: &Shared, range: std::ops::Range<usize>) -> Result<(Moments, Vec<PathRecord>)> {
    let len = shared.cfg.u0.values().len();
    let mut moments: Option<Moments> = None;
    let mut records = Vec::with_capacity(range.len());
    for idx in range {
        let path = sample_brownian(shared.seed, idx as u64, shared.dim, &shared.times)?;
        let out = simulate(shared.cfg, &path).map_err(|e| match e {
            PnlError::StepFailure { step, reason } => PnlError::StepFailure {
                step,
                reason: format!("path {idx} (master seed {}): {reason}", shared.seed),
            },
            other => other,
        })?;
        let (energy_curve, g0_curve, weighted) = if shared.opts.observables && out.blow_up.is_none() {
            observe(shared, &out.frames, &out.times)?
        } else {
            (Vec::new(), Vec::new(), None)
        };
        if out.blow_up.is_none() {
            let m = moments.get_or_insert_with(|| Moments::new(out.frames.len() * len));
            m.push(out.frames.iter().flat_map(|f| f.values().iter().copied()));
        }
        records.push(PathRecord {
            path_index: idx as u64,
            master_seed: shared.seed,
            blow_up: out.blow_up,
            energy_curve,
            g0_curve,
            apriori_ratio: weighted.map(|(s, i)| (s + i) / shared.apriori_denominator),
            weighted_energy: weighted,
            solver_iterations: out.solver.total_iterations,
        });
    }
    Ok((moments.unwrap_or_else(|| Moments::new(0)), records))
}

fn record_times(cfg: &SimConfig) -> Vec<f64> {
    let times = cfg.times();
    (0..=cfg.steps).filter(|&m| m == 0 || m % cfg.record_every == 0 || m == cfg.steps).map(|m| times[m]).collect()
}

/// Runs paths `0..m` of `cfg` with increments keyed by `(master_seed, path_index)`.
pub fn run_ensemble(cfg: &SimConfig, m: usize, master_seed: u64, opts: EnsembleOptions) -> Result<EnsembleResult> {
    if m == 0 {
        return Err(PnlError::InvalidInput("an ensemble needs at least one path".into()));
    }
    if opts.chunk == 0 {
        return Err(PnlError::InvalidInput("chunk size must be positive".into()));
    }
    cfg.validate()?;
    let grid = &cfg.grid;
    let rec_times = record_times(cfg);
    let forcing = rec_times
        .iter()
        .map(|&t| sample_scalar(grid, |x| cfg.model.forcing(x, t)).map(Some))
        .collect::<Result<Vec<_>>>()?;
    let fh = cfg
        .times()
        .iter()
        .map(|&t| lp_integral(&sample_scalar(grid, |x| cfg.noise.f_h(x, t))?, 2.0))
        .collect::<Result<Vec<_>>>()?;
    let apriori_denominator = lp_norm(&cfg.u0, 2.0)?.powi(2) + 1.0 + trapezoid(&cfg.times(), &fh);
    let shared = Shared {
        cfg,
        times: cfg.times(),
        dim: cfg.noise.brownian_dim(),
        seed: master_seed,
        opts,
        forcing,
        apriori_denominator,
    };
    let ranges: Vec<_> = (0..m).step_by(opts.chunk).map(|lo| lo..(lo + opts.chunk).min(m)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| PnlError::Config(format!("worker pool: {e}")))?;
    let chunks: Vec<(Moments, Vec<PathRecord>)> =
        pool.install(|| ranges.into_par_iter().map(|r| run_chunk(&shared, r)).collect::<Result<Vec<_>>>())?;

    let len = cfg.u0.values().len();
    let mut total = Moments::new(rec_times.len() * len);
    let mut per_path = Vec::with_capacity(m);
    for (moments, records) in chunks {
        total.merge(&moments);
        per_path.extend(records);
    }
    if total.count == 0 {
        return Err(PnlError::InsufficientData(format!("all {m} paths blew up")));
    }
    let used = total.count as f64;
    let frames = |values: &dyn Fn(usize) -> f64| -> Result<Vec<Field>> {
        (0..rec_times.len())
            .map(|f| Field::new(grid.clone(), cfg.u0.components(), (f * len..(f + 1) * len).map(values).collect()))
            .collect()
    };
    let mean = frames(&|k| total.mean[k])?;
    let second = frames(&|k| total.m2[k] / used + total.mean[k] * total.mean[k])?;
    let se = frames(&|k| if total.count > 1 { (total.m2[k] / (used - 1.0) / used).sqrt() } else { 0.0 })?;
    Ok(EnsembleResult {
        m,
        used: total.count as usize,
        mean: Trajectory::new(rec_times.clone(), mean)?,
        second_moment: Trajectory::new(rec_times.clone(), second)?,
        standard_error: Trajectory::new(rec_times, se)?,
        per_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientModel, NoiseModel};
    use crate::field::Boundary;
    use crate::sde::{InitialCondition, Scheme};
    use approx::assert_relative_eq;

    fn unit_square(cells: usize) -> GridSpec {
        GridSpec::unit(2, cells, Boundary::Dirichlet).unwrap()
    }

    #[test]
    fn g0_examples() {
        let g = unit_square(16);
        assert_eq!(weight_g0(&Field::zeros(&g, 1), None, 2, 6.0).unwrap(), 1.0);
        let one = Field::constant(&g, &[1.0]).unwrap();
        assert_relative_eq!(weight_g0(&one, None, 2, 6.0).unwrap(), 2.0, epsilon = 1e-12);
        let u = InitialCondition::SinProduct { k: 1 }.sample(&g, 1).unwrap();
        let base = weight_g0(&u, None, 2, 6.0).unwrap() - 1.0;
        let doubled = weight_g0(&u.scaled(2.0), None, 2, 6.0).unwrap() - 1.0;
        assert_relative_eq!(doubled / base, 2f64.powf(4.0), epsilon = 1e-12);
        assert!(weight_g0(&u, None, 2, 4.0).is_err());
    }

    #[test]
    fn gprime_gradient_term() {
        let g = unit_square(256);
        let u = InitialCondition::SinProduct { k: 1 }.sample(&g, 1).unwrap();
        let du = gradient(&u);
        let extra = weight_gprime(&u, &du, None, 2, 6.0).unwrap() - weight_g0(&u, None, 2, 6.0).unwrap();
        assert_relative_eq!(extra, std::f64::consts::PI.powi(2) / 2.0, max_relative = 1e-3);
        let z = Field::zeros(&g, 1);
        assert_eq!(weight_gprime(&z, &gradient(&z), None, 2, 6.0).unwrap(), 1.0);
    }

    #[test]
    fn gsecond_terms() {
        let g = unit_square(16);
        let z = Field::zeros(&g, 1);
        let params = GsecondParams { g_p: 3.0, p: 1.5, q: 2.0, c: 0.5 };
        assert_relative_eq!(weight_gsecond(&z, &gradient(&z), None, params, 2, 6.0, None).unwrap(), 2.0 * 2.0 / 0.5 * 3.0 + 1.0);
        let u = InitialCondition::Gaussian { center: vec![0.5, 0.5], width: 0.2 }.sample(&g, 1).unwrap();
        let du = gradient(&u);
        let want = 8.0 * 3.0 + 1.0 + lp_norm(&du, 6.0).unwrap().powf(6.0) + lp_norm(&u, 12.0).unwrap().powf(12.0);
        assert_relative_eq!(weight_gsecond(&u, &du, None, params, 2, 6.0, None).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn weight_curve_properties() {
        let t = vec![0.0, 0.5, 1.0];
        let c = WeightCurve::new(2.0, t.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.y[0], 1.0);
        assert_relative_eq!(c.y[2], (-2.0f64).exp(), epsilon = 1e-14);
        assert!(c.y.windows(2).all(|w| w[1] <= w[0]));
        assert!(WeightCurve::new(0.0, t.clone(), vec![5.0, 1.0, 2.0]).unwrap().y.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn weighted_energy_constant_frames() {
        let g = GridSpec::unit(1, 64, Boundary::Periodic).unwrap();
        let u = InitialCondition::SinWave { axis: 0, k: 1, phase: 0.0 }.sample(&g, 1).unwrap();
        let times: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
        let traj = Trajectory::new(times.clone(), vec![u.clone(); times.len()]).unwrap();
        let c = 1.5;
        let curve = WeightCurve::new(c, times.clone(), vec![1.0; times.len()]).unwrap();
        let (sup, int) = weighted_energy(&traj, &curve, &Region::full(&g)).unwrap();
        let du2 = lp_norm(&gradient(&u), 2.0).unwrap().powi(2);
        assert_relative_eq!(sup, lp_norm(&u, 2.0).unwrap().powi(2), epsilon = 1e-14);
        assert_relative_eq!(int, (1.0 - (-c).exp()) / c * du2, max_relative = 1e-5);
        let zero = Trajectory::new(times.clone(), vec![Field::zeros(&g, 1); times.len()]).unwrap();
        assert_eq!(weighted_energy(&zero, &curve, &Region::full(&g)).unwrap(), (0.0, 0.0));
        let bad = Region { lo: vec![0], hi: vec![65] };
        assert!(matches!(weighted_energy(&traj, &curve, &bad), Err(PnlError::InvalidRegion(_))));
    }

    fn small_cfg(sigma: f64) -> SimConfig {
        let g = GridSpec::unit(2, 8, Boundary::Periodic).unwrap();
        SimConfig::from_initial(
            g,
            CoefficientModel::identity(2, 1).unwrap(),
            NoiseModel::linear_gradient(2, 1, sigma).unwrap(),
            Scheme::ItoSemiImplicit,
            0.01,
            8,
            InitialCondition::SinWave { axis: 0, k: 1, phase: 0.3 },
        )
        .unwrap()
        .with_record_every(4)
    }

    #[test]
    fn single_path_equals_simulation() {
        let cfg = small_cfg(0.5);
        let res = run_ensemble(&cfg, 1, 9, EnsembleOptions::default()).unwrap();
        let path = sample_brownian(9, 0, 2, &cfg.times()).unwrap();
        let sim = simulate(&cfg, &path).unwrap();
        assert_eq!(res.mean.frames(), &sim.frames[..]);
        assert_eq!(res.mean.times(), &sim.times[..]);
        assert!(res.variance().iter().all(|v| v.sup_norm() < 1e-12));
    }

    #[test]
    fn zero_noise_has_zero_variance() {
        let cfg = small_cfg(0.0);
        let res = run_ensemble(&cfg, 5, 1, EnsembleOptions { chunk: 2, ..Default::default() }).unwrap();
        let path = sample_brownian(1, 0, 2, &cfg.times()).unwrap();
        let sim = simulate(&cfg, &path).unwrap();
        for (a, b) in res.mean.frames().iter().zip(&sim.frames) {
            assert!(a.sub(b).unwrap().sup_norm() < 1e-14);
        }
        for v in res.variance() {
            assert!(v.values().iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small_cfg(0.5);
        let opts = EnsembleOptions { chunk: 3, ..Default::default() };
        let a = run_ensemble(&cfg, 10, 4, opts).unwrap();
        let b = run_ensemble(&cfg, 10, 4, EnsembleOptions { workers: 4, ..opts }).unwrap();
        assert_eq!(a.mean.frames(), b.mean.frames());
        assert_eq!(a.second_moment.frames(), b.second_moment.frames());
        assert_eq!(a.per_path, b.per_path);
        for v in a.variance() {
            assert!(v.values().iter().all(|x| *x >= -1e-12));
        }
        let r = &a.per_path[3];
        assert_eq!(r.path_index, 3);
        assert!(r.g0_curve.iter().all(|g| *g >= 1.0));
        let line = r.to_json();
        assert_eq!(line["blow_up"], json!(false));
    }

    #[test]
    fn chan_merge_matches_direct() {
        let data: Vec<f64> = (0..11).map(|k| (k as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let mut whole = Moments::new(1);
        data.iter().for_each(|v| whole.push(std::iter::once(*v)));
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        data[..4].iter().for_each(|v| a.push(std::iter::once(*v)));
        data[4..].iter().for_each(|v| b.push(std::iter::once(*v)));
        a.merge(&b);
        assert_relative_eq!(a.mean[0], whole.mean[0], epsilon = 1e-14);
        assert_relative_eq!(a.m2[0], whole.m2[0], epsilon = 1e-12);
    }
}
