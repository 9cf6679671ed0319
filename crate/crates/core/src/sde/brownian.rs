//! Brownian increments keyed by `(master_seed, path_index)`.
//!
//! Each path draws from its own ChaCha stream (`seed = master_seed`,
//! `stream = path_index`), so a path's increments never depend on which other
//! paths were generated or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{PnlError, Result};

/// Mixes the refinement level into the seed of bridge draws.
const LEVEL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianPath {
    dim: usize,
    times: Vec<f64>,
    /// Row-major `(steps, dim)`.
    increments: Vec<f64>,
    master_seed: u64,
    path_index: u64,
    /// Number of bisections applied since sampling.
    level: u32,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(PnlError::InvalidInput("a time grid needs at least two points".into()));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PnlError::InvalidInput("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Uniform grid `0, T/steps, ..., T`.
pub fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|m| horizon * m as f64 / steps as f64).collect()
}

/// Independent `N(0, t_{m+1} - t_m)` increments for every step and direction.
pub fn sample_brownian(master_seed: u64, path_index: u64, dim: usize, times: &[f64]) -> Result<BrownianPath> {
    check_times(times)?;
    if dim == 0 {
        return Err(PnlError::InvalidInput("Brownian dimension must be positive".into()));
    }
    let mut rng = rng_for(master_seed, path_index);
    let mut increments = Vec::with_capacity((times.len() - 1) * dim);
    for w in times.windows(2) {
        let sd = (w[1] - w[0]).sqrt();
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            increments.push(sd * z);
        }
    }
    Ok(BrownianPath { dim, times: times.to_vec(), increments, master_seed, path_index, level: 0 })
}

impl BrownianPath {
    /// The path `B = 0`, for deterministic runs.
    pub fn zero(dim: usize, times: &[f64]) -> Result<Self> {
        check_times(times)?;
        if dim == 0 {
            return Err(PnlError::InvalidInput("Brownian dimension must be positive".into()));
        }
        let increments = vec![0.0; (times.len() - 1) * dim];
        Ok(BrownianPath { dim, times: times.to_vec(), increments, master_seed: 0, path_index: 0, level: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `Delta B` over step `m`.
    pub fn increment(&self, m: usize) -> &[f64] {
        &self.increments[m * self.dim..(m + 1) * self.dim]
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `B` at grid time `t_index`.
    pub fn value_at(&self, t_index: usize) -> Result<Vec<f64>> {
        if t_index > self.steps() {
            return Err(PnlError::InvalidInput(format!("time index {t_index} beyond {} steps", self.steps())));
        }
        let mut b = vec![0.0; self.dim];
        for m in 0..t_index {
            for (bk, db) in b.iter_mut().zip(self.increment(m)) {
                *bk += db;
            }
        }
        Ok(b)
    }

    /// Halves every step by Brownian-bridge bisection: each increment `dB`
    /// over `dt` splits into `dB/2 + s` and `dB/2 - s` with
    /// `s ~ N(0, dt/4)`. Sums over the original steps are preserved, so the
    /// refined path is the same Brownian motion sampled more finely.
    pub fn refine(&self) -> BrownianPath {
        let level = self.level + 1;
        let mut rng = rng_for(self.master_seed ^ LEVEL_SALT.wrapping_mul(level as u64), self.path_index);
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        let mut increments = Vec::with_capacity(2 * self.increments.len());
        for m in 0..self.steps() {
            let (t0, t1) = (self.times[m], self.times[m + 1]);
            times.push(t0);
            times.push(0.5 * (t0 + t1));
            let half_sd = 0.5 * (t1 - t0).sqrt();
            let mut second = Vec::with_capacity(self.dim);
            for db in self.increment(m) {
                let z: f64 = StandardNormal.sample(&mut rng);
                let s = half_sd * z;
                increments.push(0.5 * db + s);
                second.push(0.5 * db - s);
            }
            increments.extend(second);
        }
        times.push(*self.times.last().expect("non-empty"));
        BrownianPath {
            dim: self.dim,
            times,
            increments,
            master_seed: self.master_seed,
            path_index: self.path_index,
            level,
        }
    }

    /// The path scaled by a constant; `c B` for deterministic tests.
    pub fn scaled(&self, c: f64) -> BrownianPath {
        let mut p = self.clone();
        p.increments.iter_mut().for_each(|v| *v *= c);
        p
    }
}
