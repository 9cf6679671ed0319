//! Regularity measurements on fields and trajectories.
//!
//! Exponent fits bin increments by separation, take the largest increment in
//! each bin and regress its logarithm on the logarithm of the bin scale.
//! Scales are powers of two when that gives at least five bins and rounded
//! powers of `sqrt 2` otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{PnlError, Result};
use crate::field::{gradient, lp_norm, shift_for, Field, GridSpec, Region, Trajectory};
use crate::lemmas::{hoelder_combine, HoelderExponents};
use crate::sde::{normal_cdf, DriftOperator};

pub const MIN_BINS: usize = 5;
pub const MIN_FRAMES: usize = 8;
pub const MIN_PAIR_BUDGET: usize = 1000;
pub const DEFAULT_REGION_MARGIN: f64 = 0.1;

/// Power-law fit `S(d) ~ C d^slope` over separation bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    /// Slope clamped to `[0, 1]`.
    pub exponent: f64,
    pub raw_slope: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub scales: Vec<f64>,
    pub sup_values: Vec<f64>,
    pub samples: usize,
    /// Set when every increment vanished; the exponent is then 1 and `C = 0`.
    pub degenerate: bool,
}

/// Integer scales `1 <= s <= max`, dyadic when that yields enough of them.
fn scale_ladder(max: usize) -> Vec<usize> {
    let dyadic: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|s| *s <= max).collect();
    if dyadic.len() >= MIN_BINS {
        return dyadic;
    }
    let mut out: Vec<usize> = Vec::new();
    for k in 0.. {
        let s = 2f64.powf(k as f64 / 2.0).round() as usize;
        if s > max {
            break;
        }
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

/// Least squares `y = a + b x`; returns `(a, b, r^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

/// Slope of `log values` against `log h`.
pub fn loglog_slope(h: &[f64], values: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        h.iter().zip(values).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return Err(PnlError::InsufficientData("need two positive samples for a slope".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(linear_fit(&x, &y).1)
}

fn fit_bins(scales: Vec<f64>, sups: Vec<f64>, samples: usize) -> Result<ExponentFit> {
    if sups.iter().all(|s| *s == 0.0) {
        return Ok(ExponentFit {
            exponent: 1.0,
            raw_slope: f64::NAN,
            prefactor: 0.0,
            r_squared: 1.0,
            scales,
            sup_values: sups,
            samples,
            degenerate: true,
        });
    }
    let pts: Vec<(f64, f64)> =
        scales.iter().zip(&sups).filter(|(_, s)| **s > 0.0).map(|(d, s)| (d.ln(), s.ln())).collect();
    if pts.len() < MIN_BINS {
        return Err(PnlError::InsufficientData(format!("{} non-empty bins, need {MIN_BINS}", pts.len())));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (a, b, r2) = linear_fit(&x, &y);
    Ok(ExponentFit {
        exponent: b.clamp(0.0, 1.0),
        raw_slope: b,
        prefactor: a.exp(),
        r_squared: r2,
        scales,
        sup_values: sups,
        samples,
        degenerate: false,
    })
}

fn increment(f: &Field, a: usize, b: usize) -> f64 {
    f.at(a).iter().zip(f.at(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Spatial Hölder exponent of `frame` on `region`.
///
/// Every node pair of the region separated by `s` cells along an axis or a
/// main diagonal is examined for each ladder scale `s`; in addition
/// `pair_budget` random pairs with arbitrary directions are drawn from a
/// seeded stream and assigned to the nearest scale.
pub fn spatial_hoelder_estimate(frame: &Field, region: &Region, pair_budget: usize, seed: u64) -> Result<ExponentFit> {
    let grid = frame.grid();
    region.validate(grid)?;
    if pair_budget < MIN_PAIR_BUDGET {
        return Err(PnlError::InvalidInput(format!("pair budget {pair_budget} below {MIN_PAIR_BUDGET}")));
    }
    let n = grid.dim();
    let h = grid.min_spacing();
    let min_width = (0..n).map(|k| region.width(k)).min().unwrap_or(0);
    if min_width < 2 {
        return Err(PnlError::InsufficientData("region is too thin".into()));
    }
    let ladder = scale_ladder((min_width - 1) / 2);
    let mut sups = vec![0.0f64; ladder.len()];
    let mut samples = 0usize;
    let nodes = region.nodes(grid);
    let mut idx = vec![0usize; n];
    let mut moved = vec![0usize; n];

    let in_region = |idx: &[usize]| (0..n).all(|k| idx[k] >= region.lo[k] && idx[k] < region.hi[k]);

    // Axis directions, then the two main diagonals of each coordinate plane.
    let mut directions: Vec<Vec<isize>> = (0..n)
        .map(|k| {
            let mut d = vec![0; n];
            d[k] = 1;
            d
        })
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            for sign in [1isize, -1] {
                let mut d = vec![0; n];
                d[i] = 1;
                d[j] = sign;
                directions.push(d);
            }
        }
    }
    for (b, &s) in ladder.iter().enumerate() {
        for dir in &directions {
            for &node in &nodes {
                grid.multi_index(node, &mut idx);
                let mut ok = true;
                for k in 0..n {
                    let v = idx[k] as isize + dir[k] * s as isize;
                    if v < 0 {
                        ok = false;
                        break;
                    }
                    moved[k] = v as usize;
                }
                if !ok || !in_region(&moved) {
                    continue;
                }
                let other = grid.index_of(&moved);
                let len: f64 = (0..n).map(|k| (dir[k] as f64 * s as f64 * grid.spacing(k)).powi(2)).sum::<f64>().sqrt();
                sups[b] = sups[b].max(increment(frame, node, other) * (s as f64 * h / len));
                samples += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_scales: Vec<f64> = ladder.iter().map(|s| (*s as f64).ln()).collect();
    for _ in 0..pair_budget {
        let node = nodes[rng.gen_range(0..nodes.len())];
        grid.multi_index(node, &mut idx);
        let target = ladder[rng.gen_range(0..ladder.len())] as f64;
        let mut offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        offset.iter_mut().for_each(|v| *v *= target / norm);
        let mut ok = true;
        for k in 0..n {
            let v = idx[k] as isize + offset[k].round() as isize;
            if v < 0 {
                ok = false;
                break;
            }
            moved[k] = v as usize;
        }
        if !ok || !in_region(&moved) || moved == idx {
            continue;
        }
        let d: f64 = (0..n).map(|k| ((moved[k] as f64 - idx[k] as f64) * grid.spacing(k)).powi(2)).sum::<f64>().sqrt();
        let cells = d / h;
        let b = log_scales
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - cells.ln()).abs().total_cmp(&(y.1 - cells.ln()).abs()))
            .map(|(b, _)| b)
            .expect("non-empty ladder");
        let other = grid.index_of(&moved);
        sups[b] = sups[b].max(increment(frame, node, other) * (ladder[b] as f64 * h / d));
        samples += 1;
    }
    let scales = ladder.iter().map(|s| *s as f64 * h).collect();
    fit_bins(scales, sups, samples)
}

/// Temporal exponent of `max_s ||u(s + l) - u(s)||_{L^2}` over frame lags `l`.
pub fn temporal_l2_modulus(traj: &Trajectory) -> Result<ExponentFit> {
    let m = traj.len();
    if m < MIN_FRAMES {
        return Err(PnlError::InsufficientData(format!("{m} frames, need {MIN_FRAMES}")));
    }
    let ladder = scale_ladder((m - 1) / 2);
    let dt = traj.horizon() / (m - 1) as f64;
    let mut sups = vec![0.0f64; ladder.len()];
    let mut samples = 0;
    let frames = traj.frames();
    let times = traj.times();
    for (b, &lag) in ladder.iter().enumerate() {
        for s in 0..m - lag {
            let diff = frames[s + lag].sub(&frames[s])?;
            let gap = times[s + lag] - times[s];
            sups[b] = sups[b].max(lp_norm(&diff, 2.0)? * (lag as f64 * dt / gap));
            samples += 1;
        }
    }
    fit_bins(ladder.iter().map(|l| *l as f64 * dt).collect(), sups, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityProfile {
    pub p: Vec<f64>,
    /// `sup_t ||Du(t)||_{L^p}` per exponent.
    pub sup_norms: Vec<f64>,
    pub cap: f64,
    /// Exponents whose norm exceeds the cap.
    pub exceeded: Vec<f64>,
    /// Largest `p` whose norm stays below the cap, minus `n`.
    pub alpha: Option<f64>,
}

pub fn integrability_profile(traj: &Trajectory, p_list: &[f64], cap: f64) -> Result<IntegrabilityProfile> {
    let grads: Vec<Field> = traj.frames().iter().map(gradient).collect();
    let mut sup_norms = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let mut s: f64 = 0.0;
        for g in &grads {
            s = s.max(lp_norm(g, p)?);
        }
        sup_norms.push(s);
    }
    let n = traj.grid().dim() as f64;
    let exceeded = p_list.iter().zip(&sup_norms).filter(|(_, v)| **v > cap).map(|(p, _)| *p).collect();
    let alpha = p_list.iter().zip(&sup_norms).filter(|(_, v)| **v <= cap).map(|(p, _)| *p).fold(None, |acc: Option<f64>, p| {
        Some(acc.map_or(p, |a| a.max(p)))
    });
    Ok(IntegrabilityProfile { p: p_list.to_vec(), sup_norms, cap, exceeded, alpha: alpha.map(|p| p - n) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientEntry {
    pub h: f64,
    pub value: Option<f64>,
    pub error: Option<String>,
}

/// `||(f(x + h e_k) - f(x)) / h||_{L^p(region)}` for every `h`. Steps that are
/// not grid multiples, or that leave a Dirichlet grid from the region, get an
/// error marker instead of a value.
pub fn diff_quotient_curve(frame: &Field, axis: usize, p: f64, h_list: &[f64], region: &Region) -> Result<Vec<QuotientEntry>> {
    let grid = frame.grid();
    region.validate(grid)?;
    if p.is_nan() || p < 1.0 {
        return Err(PnlError::InvalidExponent(format!("p = {p} must be at least 1")));
    }
    let nodes = region.nodes(grid);
    let entry = |h: f64| -> Result<f64> {
        let s = shift_for(grid, axis, h)?;
        let mut acc: f64 = 0.0;
        for &node in &nodes {
            let other = grid.neighbor(node, axis, s).ok_or_else(|| {
                PnlError::InvalidShift(format!("h = {h} leaves the grid from the region"))
            })?;
            let d = increment(frame, other, node) / h.abs();
            acc = if p.is_infinite() { acc.max(d) } else { acc + d.powf(p) * grid.weight(node) };
        }
        Ok(if p.is_infinite() { acc } else { acc.powf(1.0 / p) })
    };
    Ok(h_list
        .iter()
        .map(|&h| match entry(h) {
            Ok(v) => QuotientEntry { h, value: Some(v), error: None },
            Err(e) => QuotientEntry { h, value: None, error: Some(e.to_string()) },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupScan {
    pub sup_curve: Vec<f64>,
    pub first_index: Option<usize>,
}

/// Per-frame sup norms and the first frame above `threshold` (or non-finite).
pub fn blowup_scan(traj: &Trajectory, threshold: f64) -> BlowupScan {
    let sup_curve: Vec<f64> = traj.frames().iter().map(|f| f.sup_norm()).collect();
    let first_index = sup_curve.iter().position(|s| !s.is_finite() || *s > threshold);
    BlowupScan { sup_curve, first_index }
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Tensor bumps `prod_i psi((x_i - c_i) / r_i)` at three radii and five
/// centres, all supported inside the box.
pub fn test_function_bank(grid: &GridSpec) -> Result<Vec<Field>> {
    let n = grid.dim();
    let (origin, extent) = (grid.origin().to_vec(), grid.extent().to_vec());
    let offsets: Vec<Vec<f64>> = if n == 1 {
        [0.0, -0.15, 0.15, -0.1, 0.1].iter().map(|o| vec![*o]).collect()
    } else {
        vec![
            vec![0.0; n],
            vec![0.15; n],
            vec![-0.15; n],
            (0..n).map(|k| if k % 2 == 0 { 0.15 } else { -0.15 }).collect(),
            (0..n).map(|k| if k % 2 == 0 { -0.15 } else { 0.15 }).collect(),
        ]
    };
    let mut bank = Vec::with_capacity(15);
    for r in [0.1, 0.2, 0.3] {
        for off in &offsets {
            let f = Field::from_fn(grid, 1, |x, out| {
                out[0] = (0..n).map(|k| bump((x[k] - origin[k] - (0.5 + off[k]) * extent[k]) / (r * extent[k]))).product();
            })?;
            bank.push(f);
        }
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |r| / (||phi||_{W^{1,2}} sup_t ||v||_{L^2})` over the bank, times and components.
    pub normalized_max: f64,
    pub raw_max: f64,
    pub functions: usize,
}

/// Weak-form residual of `v` against `div((A + sigma^2/2) Dv)`:
/// `r(phi, t_k) = <v(t_k) - v(0), phi> + sum_{m<k} (t_{m+1} - t_m) a(v(t_{m+1}), phi)`
/// with `a` the discrete bilinear form of the operator frozen at `t_m`.
pub fn mean_pde_residual(mean: &Trajectory, model: &CoefficientModel, sigma: f64, bank: &[Field]) -> Result<ResidualReport> {
    if bank.is_empty() {
        return Err(PnlError::InvalidInput("empty test function bank".into()));
    }
    if !model.is_linear() {
        return Err(PnlError::Config("the residual needs a linear drift".into()));
    }
    let grid = mean.grid();
    let nc = mean.components();
    if bank.iter().any(|phi| !phi.grid().same_as(grid) || phi.components() != 1) {
        return Err(PnlError::ShapeMismatch("test functions must be scalar fields on the trajectory grid".into()));
    }
    let shifted = model.shifted(0.5 * sigma * sigma)?;
    let times = mean.times();
    let frozen = if shifted.is_frozen_in_time() { Some(DriftOperator::assemble(grid, &shifted, 0.0, None)?) } else { None };
    let weights = grid.weights();
    let vsup = mean.frames().iter().map(|f| lp_norm(f, 2.0)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let scale_v = if vsup > 0.0 { vsup } else { 1.0 };

    let mut raw_max: f64 = 0.0;
    let mut normalized_max: f64 = 0.0;
    let mut flux = Vec::new();
    for phi in bank {
        let w12 = (lp_norm(phi, 2.0)?.powi(2) + lp_norm(&gradient(phi), 2.0)?.powi(2)).sqrt();
        for a in 0..nc {
            let mut lifted = vec![0.0; phi.values().len() * nc];
            for (node, v) in phi.values().iter().enumerate() {
                lifted[node * nc + a] = *v;
            }
            let pair = |f: &Field| -> f64 {
                f.values().chunks(nc).zip(&weights).enumerate().map(|(node, (v, w))| v[a] * phi.values()[node] * w).sum()
            };
            let base = pair(mean.frame(0));
            let mut integral = 0.0;
            for k in 1..mean.len() {
                let dt = times[k] - times[k - 1];
                let assembled;
                let op = match &frozen {
                    Some(op) => op,
                    None => {
                        assembled = DriftOperator::assemble(grid, &shifted, times[k - 1], None)?;
                        &assembled
                    }
                };
                flux.resize(op.flux_len(), 0.0);
                integral += dt * op.bilinear(mean.frame(k).values(), &lifted, &mut flux);
                let r = pair(mean.frame(k)) - base + integral;
                raw_max = raw_max.max(r.abs());
                normalized_max = normalized_max.max(r.abs() / (w12 * scale_v));
            }
        }
    }
    Ok(ResidualReport { normalized_max, raw_max, functions: bank.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityOptions {
    pub pair_budget: usize,
    pub seed: u64,
    pub region_margin: f64,
    pub cap: f64,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions { pair_budget: 4000, seed: 0, region_margin: DEFAULT_REGION_MARGIN, cap: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub gamma_space: f64,
    pub beta_time: f64,
    /// `alpha = p - n` for the largest tested `p` below the cap (0 when none).
    pub alpha_int: f64,
    pub gamma_combined: f64,
    pub combined: HoelderExponents,
    pub space_fit: ExponentFit,
    pub time_fit: ExponentFit,
    pub profile: IntegrabilityProfile,
}

/// Spatial fit of the final frame on the interior region, temporal fit over
/// all frames, and the integrability profile at `p = n + 1, ..., n + 8` and
/// `p = inf`; the combined exponent comes from the lemma combiner.
pub fn regularity_report(traj: &Trajectory, opts: &RegularityOptions) -> Result<RegularityReport> {
    let grid = traj.grid();
    let n = grid.dim();
    let region = Region::interior(grid, opts.region_margin)?;
    let space_fit = spatial_hoelder_estimate(traj.last(), &region, opts.pair_budget, opts.seed)?;
    let time_fit = temporal_l2_modulus(traj)?;
    let mut p_list: Vec<f64> = (1..=8).map(|k| (n + k) as f64).collect();
    p_list.push(f64::INFINITY);
    let profile = integrability_profile(traj, &p_list, opts.cap)?;
    let alpha_int = profile.alpha.unwrap_or(0.0).max(0.0);
    let combined = hoelder_combine(alpha_int, time_fit.exponent, n);
    Ok(RegularityReport {
        gamma_space: space_fit.exponent,
        beta_time: time_fit.exponent,
        alpha_int,
        gamma_combined: combined.gamma,
        combined,
        space_fit,
        time_fit,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportRow {
    pub time: f64,
    /// Grid node nearest to the requested probe, and its coordinates.
    pub node: usize,
    pub x: Vec<f64>,
    pub mean: f64,
    pub standard_error: f64,
    /// `Phi((y - 1/2) / s)` with `y` the scaled coordinate and `s = sigma sqrt(t) / L`.
    pub oracle: f64,
    /// Mean of the transported smoothed step, `sum_j Phi((y + j - 1/2)/s') - Phi((y + j - 1)/s')`
    /// with `s' = sqrt(eps^2 + s^2)`.
    pub smoothed_oracle: f64,
    pub deviation: f64,
    /// `3 SE + 2 h`.
    pub tolerance: f64,
    pub within: bool,
}

/// Compares a Monte Carlo mean of `du = sigma Du o dB` started from a smoothed
/// step along `axis` with the Gaussian CDF profile at every probe and every
/// recorded time `t > 0`. Component 0 is used.
pub fn transport_table(
    mean: &Trajectory,
    standard_error: &Trajectory,
    axis: usize,
    eps: f64,
    sigma: f64,
    probes: &[Vec<f64>],
) -> Result<Vec<TransportRow>> {
    let grid = mean.grid();
    let n = grid.dim();
    if axis >= n {
        return Err(PnlError::InvalidInput(format!("axis {axis} out of range for n = {n}")));
    }
    if standard_error.len() != mean.len() || !standard_error.grid().same_as(grid) {
        return Err(PnlError::ShapeMismatch("mean and standard error trajectories differ".into()));
    }
    if !(sigma > 0.0) || !(eps >= 0.0) {
        return Err(PnlError::InvalidInput(format!("need sigma > 0 and eps >= 0, got {sigma}, {eps}")));
    }
    let (origin, extent) = (grid.origin(), grid.extent());
    let mut nodes = Vec::with_capacity(probes.len());
    for p in probes {
        if p.len() != n {
            return Err(PnlError::InvalidInput(format!("probe {p:?} needs {n} coordinates")));
        }
        let idx: Vec<usize> = (0..n)
            .map(|k| {
                let m = grid.nodes_on_axis(k);
                let i = ((p[k] - origin[k]) / grid.spacing(k)).round() as i64;
                if grid.is_periodic() {
                    i.rem_euclid(m as i64) as usize
                } else {
                    i.clamp(0, m as i64 - 1) as usize
                }
            })
            .collect();
        nodes.push(grid.index_of(&idx));
    }
    let h = grid.spacing(axis);
    let mut rows = Vec::new();
    for (k, &t) in mean.times().iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let s = sigma * t.sqrt() / extent[axis];
        let s_smooth = (eps * eps + s * s).sqrt();
        for &node in &nodes {
            let x = grid.coords(node);
            let y = (x[axis] - origin[axis]) / extent[axis];
            let oracle = normal_cdf((y - 0.5) / s);
            let smoothed_oracle = (-1..=1)
                .map(|j| {
                    let z = y + j as f64;
                    normal_cdf((z - 0.5) / s_smooth) - normal_cdf((z - 1.0) / s_smooth)
                })
                .sum();
            let m = mean.frame(k).get(node, 0);
            let se = standard_error.frame(k).get(node, 0);
            let deviation = (m - oracle).abs();
            let tolerance = 3.0 * se + 2.0 * h;
            rows.push(TransportRow {
                time: t,
                node,
                x,
                mean: m,
                standard_error: se,
                oracle,
                smoothed_oracle,
                deviation,
                tolerance,
                within: deviation <= tolerance,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::NoiseModel;
    use crate::field::Boundary;
    use crate::sde::{simulate, BrownianPath, InitialCondition, Scheme, SimConfig};
    use approx::assert_relative_eq;

    #[test]
    fn ladders() {
        assert_eq!(scale_ladder(100), vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(scale_ladder(6), vec![1, 2, 3, 4, 6]);
    }

    #[test]
    fn affine_and_constant_fields() {
        let g = GridSpec::unit(2, 64, Boundary::Dirichlet).unwrap();
        let region = Region::interior(&g, 0.1).unwrap();
        let affine = Field::from_fn(&g, 1, |x, o| o[0] = x[0]).unwrap();
        let fit = spatial_hoelder_estimate(&affine, &region, 2000, 1).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.05, "{fit:?}");
        let c = Field::constant(&g, &[2.0]).unwrap();
        let fit = spatial_hoelder_estimate(&c, &region, 2000, 1).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.exponent, 1.0);
        assert_eq!(fit.prefactor, 0.0);
    }

    #[test]
    fn exponents_are_scale_free() {
        let g = GridSpec::unit(2, 64, Boundary::Dirichlet).unwrap();
        let region = Region::interior(&g, 0.1).unwrap();
        let f = InitialCondition::Cusp { center: vec![0.5, 0.5], exponent: 0.5 }.sample(&g, 1).unwrap();
        let a = spatial_hoelder_estimate(&f, &region, 2000, 3).unwrap();
        let b = spatial_hoelder_estimate(&f.scaled(7.0), &region, 2000, 3).unwrap();
        assert_relative_eq!(a.raw_slope, b.raw_slope, epsilon = 1e-12);
    }

    #[test]
    fn temporal_examples() {
        let g = GridSpec::unit(2, 16, Boundary::Periodic).unwrap();
        let base = InitialCondition::SinWave { axis: 1, k: 1, phase: 0.2 }.sample(&g, 1).unwrap();
        let times: Vec<f64> = (0..33).map(|k| k as f64 / 32.0).collect();
        let linear = Trajectory::new(times.clone(), times.iter().map(|t| base.scaled(*t)).collect()).unwrap();
        let fit = temporal_l2_modulus(&linear).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        let still = Trajectory::new(times.clone(), vec![base.clone(); 33]).unwrap();
        assert!(temporal_l2_modulus(&still).unwrap().degenerate);
        let short = Trajectory::new(times[..5].to_vec(), vec![base; 5]).unwrap();
        assert!(matches!(temporal_l2_modulus(&short), Err(PnlError::InsufficientData(_))));
    }

    #[test]
    fn quotient_curves() {
        let g = GridSpec::unit(1, 256, Boundary::Periodic).unwrap();
        let region = Region::full(&g);
        let hs: Vec<f64> = (0..6).map(|k| (1 << k) as f64 / 256.0).collect();
        let smooth = InitialCondition::SinWave { axis: 0, k: 1, phase: 0.0 }.sample(&g, 1).unwrap();
        let curve = diff_quotient_curve(&smooth, 0, 2.0, &hs, &region).unwrap();
        let exact = 2.0 * std::f64::consts::PI / 2f64.sqrt();
        for e in &curve {
            let x = std::f64::consts::PI * e.h;
            assert_relative_eq!(e.value.unwrap(), exact * x.sin() / x, max_relative = 1e-9);
        }
        let step = Field::from_fn(&g, 1, |x, o| o[0] = if x[0] >= 0.5 { 1.0 } else { 0.0 }).unwrap();
        let curve = diff_quotient_curve(&step, 0, 2.0, &hs, &region).unwrap();
        let vals: Vec<f64> = curve.iter().map(|e| e.value.unwrap()).collect();
        assert_relative_eq!(loglog_slope(&hs, &vals).unwrap(), -0.5, epsilon = 1e-9);
        let zero = diff_quotient_curve(&Field::zeros(&g, 1), 0, 2.0, &hs, &region).unwrap();
        assert!(zero.iter().all(|e| e.value == Some(0.0)));
        let bad = diff_quotient_curve(&smooth, 0, 2.0, &[0.3 / 256.0], &region).unwrap();
        assert!(bad[0].error.is_some());
    }

    #[test]
    fn quotient_is_symmetric_in_h() {
        let g = GridSpec::unit(2, 32, Boundary::Dirichlet).unwrap();
        let region = Region::interior(&g, 0.2).unwrap();
        let f = InitialCondition::Gaussian { center: vec![0.5, 0.5], width: 0.2 }.sample(&g, 1).unwrap();
        let h = 2.0 / 32.0;
        let plus = diff_quotient_curve(&f, 1, 2.0, &[h], &region).unwrap()[0].value.unwrap();
        let minus = diff_quotient_curve(&f, 1, 2.0, &[-h], &region).unwrap()[0].value.unwrap();
        assert_relative_eq!(plus, minus, max_relative = 1e-12);
    }

    #[test]
    fn integrability_examples() {
        let g = GridSpec::unit(2, 32, Boundary::Periodic).unwrap();
        let t = vec![0.0, 1.0];
        let zero = Trajectory::new(t.clone(), vec![Field::zeros(&g, 1); 2]).unwrap();
        let prof = integrability_profile(&zero, &[2.0, 4.0, f64::INFINITY], 1.0).unwrap();
        assert!(prof.sup_norms.iter().all(|v| *v == 0.0));
        let d = GridSpec::unit(2, 32, Boundary::Dirichlet).unwrap();
        let ramp = Field::from_fn(&d, 1, |x, o| o[0] = 3.0 * x[0]).unwrap();
        let traj = Trajectory::new(t, vec![ramp.clone(), ramp]).unwrap();
        let prof = integrability_profile(&traj, &[2.0, 4.0, 8.0], 10.0).unwrap();
        for v in &prof.sup_norms {
            assert_relative_eq!(*v, 3.0, max_relative = 1e-12);
        }
        assert_eq!(prof.alpha, Some(6.0));
    }

    #[test]
    fn blowup_examples() {
        let g = GridSpec::unit(1, 8, Boundary::Periodic).unwrap();
        let one = Field::constant(&g, &[1.0]).unwrap();
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let growing = Trajectory::new(times.clone(), times.iter().map(|t| one.scaled((3.0 * t).exp())).collect()).unwrap();
        assert_eq!(blowup_scan(&growing, 1e6).first_index, Some(5));
        let zero = Trajectory::new(times, vec![Field::zeros(&g, 1); 10]).unwrap();
        assert_eq!(blowup_scan(&zero, 1.0).first_index, None);
    }

    fn heat(sigma_shift: f64) -> (Trajectory, CoefficientModel) {
        let g = GridSpec::unit(2, 16, Boundary::Dirichlet).unwrap();
        let model = CoefficientModel::diag_anisotropic(2, 1, 1.0, 4.0).unwrap();
        let cfg = SimConfig::from_initial(
            g,
            model.shifted(sigma_shift).unwrap(),
            NoiseModel::zero(2, 1),
            Scheme::ItoSemiImplicit,
            0.02,
            20,
            InitialCondition::SinProduct { k: 1 },
        )
        .unwrap();
        let out = simulate(&cfg, &BrownianPath::zero(2, &cfg.times()).unwrap()).unwrap();
        (out.into_trajectory().unwrap(), model)
    }

    #[test]
    fn residual_vanishes_on_discrete_solutions() {
        let (traj, model) = heat(0.5 * 1.5 * 1.5);
        let bank = test_function_bank(traj.grid()).unwrap();
        assert_eq!(bank.len(), 15);
        let r = mean_pde_residual(&traj, &model, 1.5, &bank).unwrap();
        assert!(r.normalized_max < 1e-8, "{r:?}");
        let off = mean_pde_residual(&traj, &model, 1.0, &bank).unwrap();
        assert!(off.normalized_max > 1e-3, "{off:?}");
        assert!(mean_pde_residual(&traj, &model, 1.5, &[]).is_err());
    }

    #[test]
    fn report_uses_the_combiner() {
        let (traj, _) = heat(0.0);
        let rep = regularity_report(&traj, &RegularityOptions::default()).unwrap();
        let expect = hoelder_combine(rep.alpha_int, rep.beta_time, 2);
        assert_eq!(rep.gamma_combined, expect.gamma);
        assert!((0.0..=1.0).contains(&rep.gamma_space));
    }

    #[test]
    fn transport_table_at_exact_profile() {
        let g = GridSpec::unit(2, 32, Boundary::Periodic).unwrap();
        let times = vec![0.0, 0.01, 0.04];
        let frames: Vec<Field> = times
            .iter()
            .map(|&t: &f64| {
                let s = (t + 1e-4f64).sqrt();
                Field::from_fn(&g, 1, |x, o| {
                    o[0] = (-1..=1)
                        .map(|j| normal_cdf((x[0] + j as f64 - 0.5) / s) - normal_cdf((x[0] + j as f64 - 1.0) / s))
                        .sum()
                })
                .unwrap()
            })
            .collect();
        let mean = Trajectory::new(times.clone(), frames).unwrap();
        let se = Trajectory::new(times, vec![Field::zeros(&g, 1); 3]).unwrap();
        let probes = vec![vec![13.0 / 32.0, 0.5], vec![0.5, 0.5], vec![19.0 / 32.0, 0.5]];
        let rows = transport_table(&mean, &se, 0, 0.01, 1.0, &probes).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert_relative_eq!(r.mean, r.smoothed_oracle, epsilon = 1e-12);
            assert!(r.within, "{r:?}");
        }
        assert_relative_eq!(rows[1].oracle, 0.5, epsilon = 1e-15);
    }
}
