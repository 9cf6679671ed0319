//! Discrete Lebesgue and `V^{m,p}` norms.
//!
//! Integrals use node value times dual-cell volume; pointwise norms are
//! Euclidean over components (Frobenius for gradients). Pass
//! `f64::INFINITY` for the sup norm.

use crate::error::{PnlError, Result};

use super::calculus::gradient;
use super::grid::Region;
use super::types::{Field, Trajectory};

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(PnlError::InvalidExponent(format!("p = {p} must be at least 1")));
    }
    Ok(())
}

/// `(sum_nodes |f(x)|^p w(x))^(1/p)`, or the max of `|f(x)|` for `p = inf`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(lp_norm_over(f, p, 0..f.node_count()))
}

/// As [`lp_norm`], restricted to the nodes of `region`.
pub fn lp_norm_region(f: &Field, p: f64, region: &Region) -> Result<f64> {
    check_exponent(p)?;
    region.validate(f.grid())?;
    Ok(lp_norm_over(f, p, region.nodes(f.grid()).into_iter()))
}

/// `sum |f|^p w` (no root); `p` finite.
pub fn lp_integral(f: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p.is_infinite() {
        return Err(PnlError::InvalidExponent("integral of |f|^inf is undefined".into()));
    }
    let grid = f.grid();
    Ok((0..f.node_count()).map(|i| f.pointwise_norm(i).powf(p) * grid.weight(i)).sum())
}

fn lp_norm_over(f: &Field, p: f64, nodes: impl Iterator<Item = usize>) -> f64 {
    let grid = f.grid();
    if p.is_infinite() {
        return nodes.map(|i| f.pointwise_norm(i)).fold(0.0, f64::max);
    }
    if p == 2.0 {
        let s: f64 = nodes
            .map(|i| f.at(i).iter().map(|v| v * v).sum::<f64>() * grid.weight(i))
            .sum();
        return s.sqrt();
    }
    let s: f64 = nodes.map(|i| f.pointwise_norm(i).powf(p) * grid.weight(i)).sum();
    s.powf(1.0 / p)
}

/// Space-time `L^p(D_T)` norm of a sequence of frames, trapezoid in time.
pub fn spacetime_lp_norm(times: &[f64], frames: &[Field], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if times.len() != frames.len() || frames.is_empty() {
        return Err(PnlError::ShapeMismatch("times and frames differ in length".into()));
    }
    if p.is_infinite() {
        return Ok(frames.iter().map(|f| f.sup_norm()).fold(0.0, f64::max));
    }
    let per_frame: Vec<f64> = frames.iter().map(|f| lp_integral(f, p)).collect::<Result<_>>()?;
    Ok(trapezoid(times, &per_frame).powf(1.0 / p))
}

/// Trapezoid rule for samples `y` at `t`.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1])).sum()
}

/// `max_t ||u(t)||_{L^m} + ||Du||_{L^p(D_T)}`.
pub fn vmp_norm(traj: &Trajectory, m: f64, p: f64) -> Result<f64> {
    check_exponent(m)?;
    check_exponent(p)?;
    let sup = traj
        .frames()
        .iter()
        .map(|f| lp_norm(f, m))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let grads: Vec<Field> = traj.frames().iter().map(gradient).collect();
    Ok(sup + spacetime_lp_norm(traj.times(), &grads, p)?)
}
