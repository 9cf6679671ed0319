//! Sectioned TOML experiment configuration.
//!
//! Every key has a default; each applied default is logged at info level and
//! kept in [`ExperimentConfig::defaults_applied`]. Unknown keys are rejected
//! with the nearest valid names.

use std::fmt::Debug;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analytics::{RegularityOptions, DEFAULT_REGION_MARGIN};
use crate::coefficients::{model_by_name, CoefficientModel, NoiseModel};
use crate::ensemble::{EnsembleOptions, DEFAULT_CHUNK};
use crate::error::{PnlError, Result};
use crate::field::{Boundary, GridSpec, DEFAULT_NODE_BUDGET};
use crate::sde::{InitialCondition, Scheme, SimConfig, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_C_SAFE, DEFAULT_SOLVER_TOL};

pub const SECTIONS: [&str; 5] = ["grid", "model", "noise", "run", "analysis"];

const GRID_KEYS: [&str; 5] = ["n", "cells", "extent", "boundary", "node_budget"];
const MODEL_KEYS: [&str; 6] = ["name", "components", "lambda0", "lambda1", "turns", "a"];
const NOISE_KEYS: [&str; 5] = ["kind", "sigma", "amplitude", "scheme", "c_safe"];
const RUN_KEYS: [&str; 12] = [
    "horizon",
    "steps",
    "record_every",
    "initial",
    "seed",
    "paths",
    "workers",
    "chunk",
    "c0",
    "observables",
    "blowup_threshold",
    "solver_tol",
];
const ANALYSIS_KEYS: [&str; 6] = ["pair_budget", "region_margin", "cap", "seed", "residual", "probes"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    pub n: usize,
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
    pub boundary: Boundary,
    pub node_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub name: String,
    pub components: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub turns: f64,
    /// Overrides the model's forcing integrability exponent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKindSetting {
    Zero,
    /// `H = sigma Du`.
    Gradient,
    /// `H = amplitude` in every entry, one Brownian motion.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeSetting {
    Ito,
    Stratonovich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub kind: NoiseKindSetting,
    pub sigma: f64,
    pub amplitude: f64,
    pub scheme: SchemeSetting,
    pub c_safe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub horizon: f64,
    pub steps: usize,
    pub record_every: usize,
    pub initial: InitialCondition,
    pub seed: u64,
    pub paths: usize,
    pub workers: usize,
    pub chunk: usize,
    pub c0: f64,
    pub observables: bool,
    pub blowup_threshold: f64,
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub pair_budget: usize,
    pub region_margin: f64,
    pub cap: f64,
    pub seed: u64,
    pub residual: bool,
    /// Probe points for the transport table; empty selects three points
    /// across the middle of the first axis.
    pub probes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridSettings,
    pub model: ModelSettings,
    pub noise: NoiseSettings,
    pub run: RunSettings,
    pub analysis: AnalysisSettings,
    #[serde(skip)]
    pub defaults_applied: Vec<String>,
}

fn suggestions(key: &str, valid: &[&str]) -> Vec<String> {
    let mut ranked: Vec<(usize, &str)> = valid.iter().map(|v| (strsim::levenshtein(key, v), *v)).collect();
    ranked.sort();
    ranked.into_iter().take(3).map(|(_, v)| v.to_string()).collect()
}

fn unknown_key(scope: &str, key: &str, valid: &[&str]) -> PnlError {
    PnlError::Config(format!(
        "unknown key '{scope}{key}'; nearest valid keys: {}",
        suggestions(key, valid).join(", ")
    ))
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
    defaults: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a toml::Table, name: &'static str, keys: &[&str], defaults: &'a mut Vec<String>) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(toml::Value::Table(t)) => Some(t),
            Some(_) => return Err(PnlError::Config(format!("'{name}' must be a section"))),
        };
        if let Some(t) = table {
            if let Some(k) = t.keys().find(|k| !keys.contains(&k.as_str())) {
                return Err(unknown_key(&format!("{name}."), k, keys));
            }
        }
        Ok(Section { name, table, defaults })
    }

    fn raw(&self, key: &str) -> Option<&'a toml::Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn convert<T: DeserializeOwned>(&self, key: &str, v: &toml::Value) -> Result<T> {
        v.clone().try_into().map_err(|e| PnlError::Config(format!("{}.{key}: {e}", self.name)))
    }

    fn note_default(&mut self, key: &str, shown: impl Debug) {
        let msg = format!("{}.{key} = {shown:?}", self.name);
        log::info!("default applied: {msg}");
        self.defaults.push(msg);
    }

    fn get<T: DeserializeOwned + Debug>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            Some(v) => self.convert(key, v),
            None => {
                self.note_default(key, &default);
                Ok(default)
            }
        }
    }

    fn optional<T: DeserializeOwned>(&mut self, key: &str, absent: &str) -> Result<Option<T>> {
        match self.raw(key) {
            Some(v) => self.convert(key, v).map(Some),
            None => {
                self.note_default(key, format_args!("{absent}"));
                Ok(None)
            }
        }
    }

    /// A scalar repeated on every axis, or one value per axis.
    fn per_axis<T: DeserializeOwned + Debug + Clone>(&mut self, key: &str, n: usize, default: T) -> Result<Vec<T>> {
        let values = match self.raw(key) {
            Some(toml::Value::Array(items)) => items.iter().map(|v| self.convert(key, v)).collect::<Result<Vec<T>>>()?,
            Some(v) => vec![self.convert(key, v)?; n],
            None => {
                self.note_default(key, &default);
                vec![default; n]
            }
        };
        if values.len() != n {
            return Err(PnlError::Config(format!("{}.{key} has {} entries, expected {n}", self.name, values.len())));
        }
        Ok(values)
    }
}

fn check_seed(name: &str, seed: u64) -> Result<u64> {
    if seed > i64::MAX as u64 {
        return Err(PnlError::Config(format!("{name} = {seed} exceeds the largest storable seed {}", i64::MAX)));
    }
    Ok(seed)
}

/// Parses and validates an experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: toml::Table = text.parse().map_err(|e| PnlError::Config(format!("parse error: {e}")))?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(unknown_key("", k, &SECTIONS));
    }
    let mut defaults = Vec::new();

    let mut s = Section::new(&root, "grid", &GRID_KEYS, &mut defaults)?;
    let n: usize = s.get("n", 2)?;
    if n == 0 {
        return Err(PnlError::Config("grid.n must be positive".into()));
    }
    let grid = GridSettings {
        n,
        cells: s.per_axis("cells", n, 32usize)?,
        extent: s.per_axis("extent", n, 1.0f64)?,
        boundary: s.get("boundary", Boundary::Dirichlet)?,
        node_budget: s.get("node_budget", DEFAULT_NODE_BUDGET)?,
    };

    let mut s = Section::new(&root, "model", &MODEL_KEYS, &mut defaults)?;
    let model = ModelSettings {
        name: s.get("name", "identity".to_string())?,
        components: s.get("components", 1usize)?,
        lambda0: s.get("lambda0", 1.0)?,
        lambda1: s.get("lambda1", 1.0)?,
        turns: s.get("turns", 1.0)?,
        a: s.optional("a", "model value")?,
    };

    let mut s = Section::new(&root, "noise", &NOISE_KEYS, &mut defaults)?;
    let noise = NoiseSettings {
        kind: s.get("kind", NoiseKindSetting::Zero)?,
        sigma: s.get("sigma", 0.0)?,
        amplitude: s.get("amplitude", 0.0)?,
        scheme: s.get("scheme", SchemeSetting::Ito)?,
        c_safe: s.get("c_safe", DEFAULT_C_SAFE)?,
    };

    let mut s = Section::new(&root, "run", &RUN_KEYS, &mut defaults)?;
    let run = RunSettings {
        horizon: s.get("horizon", 0.1)?,
        steps: s.get("steps", 100usize)?,
        record_every: s.get("record_every", 1usize)?,
        initial: s.get("initial", InitialCondition::SinProduct { k: 1 })?,
        seed: check_seed("run.seed", s.get("seed", 0u64)?)?,
        paths: s.get("paths", 1usize)?,
        workers: s.get("workers", 1usize)?,
        chunk: s.get("chunk", DEFAULT_CHUNK)?,
        c0: s.get("c0", 1.0)?,
        observables: s.get("observables", true)?,
        blowup_threshold: s.get("blowup_threshold", DEFAULT_BLOWUP_THRESHOLD)?,
        solver_tol: s.get("solver_tol", DEFAULT_SOLVER_TOL)?,
    };

    let defaults_opts = RegularityOptions::default();
    let mut s = Section::new(&root, "analysis", &ANALYSIS_KEYS, &mut defaults)?;
    let analysis = AnalysisSettings {
        pair_budget: s.get("pair_budget", defaults_opts.pair_budget)?,
        region_margin: s.get("region_margin", DEFAULT_REGION_MARGIN)?,
        cap: s.get("cap", defaults_opts.cap)?,
        seed: check_seed("analysis.seed", s.get("seed", 0u64)?)?,
        residual: s.get("residual", true)?,
        probes: s.get("probes", Vec::new())?,
    };

    let cfg = ExperimentConfig { grid, model, noise, run, analysis, defaults_applied: defaults };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Checks everything that does not need a simulation: grid, models,
    /// initial data, noise stability and the run parameters.
    pub fn validate(&self) -> Result<()> {
        if self.run.paths == 0 {
            return Err(PnlError::Config("run.paths must be at least 1".into()));
        }
        if self.run.chunk == 0 {
            return Err(PnlError::Config("run.chunk must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.analysis.region_margin) {
            return Err(PnlError::Config(format!(
                "analysis.region_margin = {} outside [0, 0.5)",
                self.analysis.region_margin
            )));
        }
        if let Some(p) = self.analysis.probes.iter().find(|p| p.len() != self.grid.n) {
            return Err(PnlError::Config(format!("probe {p:?} needs {} coordinates", self.grid.n)));
        }
        self.build_sim().map(|_| ())
    }

    /// Canonical TOML with every parameter spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PnlError::Config(format!("cannot serialize configuration: {e}")))
    }

    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.run.seed = check_seed("seed", seed)?;
        Ok(self)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        GridSpec::with_budget(g.extent.clone(), g.cells.clone(), g.boundary, g.node_budget)
    }

    pub fn coefficient_model(&self) -> Result<CoefficientModel> {
        let m = &self.model;
        let model = model_by_name(&m.name, self.grid.n, m.components, m.lambda0, m.lambda1, m.turns)?;
        Ok(match m.a {
            Some(a) => {
                let mut params = *model.params();
                params.a = a;
                model.with_params(params)
            }
            None => model,
        })
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let (n, nc) = (self.grid.n, self.model.components);
        match self.noise.kind {
            NoiseKindSetting::Zero => Ok(NoiseModel::zero(n, nc)),
            NoiseKindSetting::Gradient => NoiseModel::linear_gradient(n, nc, self.noise.sigma),
            NoiseKindSetting::Additive => {
                let amp = self.noise.amplitude;
                if !amp.is_finite() {
                    return Err(PnlError::Config(format!("noise.amplitude must be finite, got {amp}")));
                }
                NoiseModel::additive(n, nc, 1, Arc::new(move |_x, _t, out: &mut [f64]| out.fill(amp)))
            }
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.noise.scheme {
            SchemeSetting::Ito => Scheme::ItoSemiImplicit,
            SchemeSetting::Stratonovich => Scheme::StratonovichCorrected,
        }
    }

    /// `sigma` when the noise is `sigma Du`, else 0.
    pub fn gradient_sigma(&self) -> f64 {
        match self.noise.kind {
            NoiseKindSetting::Gradient => self.noise.sigma,
            _ => 0.0,
        }
    }

    /// The validated simulation configuration; stability violations report
    /// the computed step bound.
    pub fn build_sim(&self) -> Result<SimConfig> {
        let grid = self.grid_spec()?;
        let mut sim = SimConfig::from_initial(
            grid,
            self.coefficient_model()?,
            self.noise_model()?,
            self.scheme(),
            self.run.horizon,
            self.run.steps,
            self.run.initial.clone(),
        )?
        .with_record_every(self.run.record_every);
        sim.c_safe = self.noise.c_safe;
        sim.blowup_threshold = self.run.blowup_threshold;
        sim.solver_tol = self.run.solver_tol;
        sim.validate()?;
        Ok(sim)
    }

    pub fn ensemble_options(&self) -> EnsembleOptions {
        EnsembleOptions {
            workers: self.run.workers,
            chunk: self.run.chunk,
            c0: self.run.c0,
            observables: self.run.observables,
        }
    }

    pub fn regularity_options(&self) -> RegularityOptions {
        RegularityOptions {
            pair_budget: self.analysis.pair_budget,
            seed: self.analysis.seed,
            region_margin: self.analysis.region_margin,
            cap: self.analysis.cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[grid]\nn = 2\ncells = 16\n[model]\nname = \"identity\"\n").unwrap();
        assert_eq!(cfg.grid.cells, vec![16, 16]);
        assert_eq!(cfg.grid.extent, vec![1.0, 1.0]);
        assert_eq!(cfg.run.steps, 100);
        assert!(cfg.defaults_applied.iter().any(|d| d.starts_with("run.horizon")));
        assert!(cfg.defaults_applied.iter().any(|d| d.starts_with("grid.boundary")));
        assert!(!cfg.defaults_applied.iter().any(|d| d.starts_with("grid.cells")));
        assert!(cfg.build_sim().is_ok());
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = "[grid]\ncells = [16, 8]\nboundary = \"periodic\"\n[noise]\nkind = \"gradient\"\nsigma = 0.5\n\
                    scheme = \"stratonovich\"\n[model]\nname = \"zero\"\n[run]\nsteps = 400\n\
                    initial = { kind = \"smoothed-step\", axis = 0, eps = 0.05 }\n";
        let cfg = parse_config(text).unwrap();
        let canon = cfg.to_toml().unwrap();
        let again = parse_config(&canon).unwrap();
        assert_eq!(cfg.grid, again.grid);
        assert_eq!(cfg.noise, again.noise);
        assert_eq!(cfg.run, again.run);
        assert_eq!(cfg.analysis, again.analysis);
        assert_eq!(canon, again.to_toml().unwrap());
        assert!(again.defaults_applied.iter().all(|d| d.starts_with("model.a")));
    }

    #[test]
    fn unknown_key_suggests() {
        let err = parse_config("[grid]\ncels = 8\n").unwrap_err().to_string();
        assert!(err.contains("grid.cels") && err.contains("cells"), "{err}");
        let err = parse_config("[gird]\n").unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
    }

    #[test]
    fn duplicate_key_is_a_parse_error() {
        let err = parse_config("[grid]\nn = 2\nn = 3\n").unwrap_err();
        assert!(matches!(err, PnlError::Config(ref m) if m.starts_with("parse error")), "{err}");
    }

    #[test]
    fn noise_cfl_rejection_prints_bound() {
        let text = "[grid]\ncells = 32\nboundary = \"periodic\"\n[model]\nname = \"zero\"\n\
                    [noise]\nkind = \"gradient\"\nsigma = 2.0\n[run]\nhorizon = 0.1\nsteps = 10\n";
        let err = parse_config(text).unwrap_err();
        let bound = 0.5 * (1.0f64 / 32.0).powi(2) / 4.0;
        let msg = err.to_string();
        assert!(matches!(err, PnlError::Stability(_)), "{msg}");
        assert!(msg.contains(&format!("{bound:.6e}")), "{msg}");
        let steps = (0.1 / bound).ceil();
        assert!(msg.contains(&format!("use at least {steps} steps")), "{msg}");
    }

    #[test]
    fn large_seeds_are_rejected() {
        let cfg = parse_config("").unwrap();
        assert!(cfg.clone().with_seed(u64::MAX).is_err());
        assert_eq!(cfg.with_seed(7).unwrap().run.seed, 7);
    }
}
