//! Command implementations: each runs one module operation and writes its
//! artifacts; the CLI only parses arguments and maps errors to exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::analytics::{
    blowup_scan, mean_pde_residual, regularity_report, test_function_bank, transport_table, TransportRow,
};
use crate::ensemble::{run_ensemble, write_ndjson};
use crate::error::{PnlError, Result};
use crate::field::snapshot::{encode, read_snapshot};
use crate::field::{lp_norm, Field, GridSpec, Trajectory};
use crate::lemmas::suite::{run_suite, SuiteConfig, SuiteReport, SUITE_NAMES};
use crate::lemmas::{
    dispersion_ok_elliptic, dispersion_ok_parabolic, elliptic_dispersion, iteration_schedule, lh_star_n, q_max,
    shifted_dispersion_ratio, sigma_zero, IterationSchedule,
};
use crate::sde::{sample_brownian, simulate, InitialCondition};

use super::config::{ExperimentConfig, NoiseKindSetting, SchemeSetting};
use super::manifest::{digest_file, start_clock, ExperimentManifest, FileDigest, RunDir, CONFIG_FILE};

pub const TIMES_FILE: &str = "times.csv";
pub const ANALYSIS_FILE: &str = "analysis.ndjson";
pub const TRANSPORT_FILE: &str = "transport_table.csv";

pub fn frame_file(prefix: &str, k: usize) -> String {
    format!("{prefix}_{k:05}.pnlf")
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
}

fn times_csv(times: &[f64]) -> String {
    let mut s = String::from("index,time\n");
    for (k, t) in times.iter().enumerate() {
        s.push_str(&format!("{k},{t}\n"));
    }
    s
}

fn parse_times(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some("index,time") {
        return Err(PnlError::Format("times.csv must start with 'index,time'".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once(',')
                .and_then(|(_, t)| t.parse().ok())
                .ok_or_else(|| PnlError::Format(format!("bad times.csv line '{l}'")))
        })
        .collect()
}

fn json_line(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(v)?;
    out.push(b'\n');
    Ok(out)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn write_frames(run: &mut RunDir, prefix: &str, frames: &[Field]) -> Result<()> {
    for (k, f) in frames.iter().enumerate() {
        run.write(&frame_file(prefix, k), &encode(f))?;
    }
    Ok(())
}

/// Path 0 of the configured run: `frame_XXXXX.pnlf`, `times.csv`, `run.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    let started = start_clock();
    let sim = cfg.build_sim()?;
    let path = sample_brownian(cfg.run.seed, 0, sim.noise.brownian_dim(), &sim.times())?;
    let outcome = simulate(&sim, &path)?;
    let mut run = RunDir::create(out)?;
    run.write(CONFIG_FILE, cfg.to_toml()?.as_bytes())?;
    write_frames(&mut run, "frame", &outcome.frames)?;
    run.write(TIMES_FILE, times_csv(&outcome.times).as_bytes())?;
    let summary = json!({
        "command": "simulate",
        "path_index": 0,
        "master_seed": cfg.run.seed,
        "dt": sim.dt(),
        "noise_cfl_bound": finite_or_null(sim.noise_cfl_bound()),
        "frames": outcome.frames.len(),
        "blow_up": outcome.blow_up,
        "solver": outcome.solver,
    });
    run.write("run.json", &json_line(&summary)?)?;
    let manifest = run.finish("simulate", cfg, Vec::new(), started)?;
    Ok(RunArtifacts { dir: out.to_path_buf(), manifest })
}

/// Monte Carlo moments: `mean_`, `variance_` and `stderr_` snapshots per
/// recorded time, `paths.ndjson` and `summary.json`.
pub fn cmd_ensemble(cfg: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    let started = start_clock();
    let sim = cfg.build_sim()?;
    let result = run_ensemble(&sim, cfg.run.paths, cfg.run.seed, cfg.ensemble_options())?;
    let mut run = RunDir::create(out)?;
    run.write(CONFIG_FILE, cfg.to_toml()?.as_bytes())?;
    write_frames(&mut run, "mean", result.mean.frames())?;
    write_frames(&mut run, "variance", &result.variance())?;
    write_frames(&mut run, "stderr", result.standard_error.frames())?;
    run.write(TIMES_FILE, times_csv(result.mean.times()).as_bytes())?;
    let mut ndjson = Vec::new();
    write_ndjson(&result.per_path, &mut ndjson)?;
    run.write("paths.ndjson", &ndjson)?;
    let summary = json!({
        "command": "ensemble",
        "master_seed": cfg.run.seed,
        "paths": result.m,
        "used": result.used,
        "blow_ups": result.blow_ups(),
        "dt": sim.dt(),
        "noise_cfl_bound": finite_or_null(sim.noise_cfl_bound()),
        "frames": result.mean.len(),
        "final_mean_l2": lp_norm(result.mean.last(), 2.0)?,
        "final_max_standard_error": result.standard_error.last().sup_norm(),
    });
    run.write("summary.json", &json_line(&summary)?)?;
    let manifest = run.finish("ensemble", cfg, Vec::new(), started)?;
    Ok(RunArtifacts { dir: out.to_path_buf(), manifest })
}

/// Frames of a prior run directory, read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    /// `frame` for single paths, `mean` for ensembles.
    pub kind: String,
    pub trajectory: Trajectory,
    pub standard_error: Option<Trajectory>,
    pub inputs: Vec<FileDigest>,
}

fn load_frames(dir: &Path, prefix: &str, grid: &GridSpec, times: &[f64], inputs: &mut Vec<FileDigest>) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let p = dir.join(frame_file(prefix, k));
        let file = fs::File::open(&p).map_err(|e| PnlError::InvalidInput(format!("cannot open {}: {e}", p.display())))?;
        frames.push(read_snapshot(std::io::BufReader::new(file))?.into_field(grid)?);
        inputs.push(digest_file(&p)?);
    }
    Trajectory::new(times.to_vec(), frames)
}

pub fn load_run(dir: &Path, config: Option<&ExperimentConfig>) -> Result<LoadedRun> {
    if !dir.is_dir() {
        return Err(PnlError::InvalidInput(format!("{} is not a run directory", dir.display())));
    }
    let mut inputs = Vec::new();
    let config = match config {
        Some(c) => c.clone(),
        None => {
            let p = dir.join(CONFIG_FILE);
            inputs.push(digest_file(&p).map_err(|e| PnlError::InvalidInput(format!("{}: {e}", p.display())))?);
            super::manifest::load_config(&p)?
        }
    };
    let times_path = dir.join(TIMES_FILE);
    let times = parse_times(
        &fs::read_to_string(&times_path)
            .map_err(|e| PnlError::InvalidInput(format!("cannot read {}: {e}", times_path.display())))?,
    )?;
    inputs.push(digest_file(&times_path)?);
    let grid = config.grid_spec()?;
    let kind = if dir.join(frame_file("mean", 0)).exists() {
        "mean"
    } else if dir.join(frame_file("frame", 0)).exists() {
        "frame"
    } else {
        return Err(PnlError::InvalidInput(format!("no snapshots in {}", dir.display())));
    };
    let trajectory = load_frames(dir, kind, &grid, &times, &mut inputs)?;
    let standard_error = if kind == "mean" { Some(load_frames(dir, "stderr", &grid, &times, &mut inputs)?) } else { None };
    Ok(LoadedRun { dir: dir.to_path_buf(), config, kind: kind.to_string(), trajectory, standard_error, inputs })
}

fn default_probes(cfg: &ExperimentConfig, axis: usize) -> Vec<Vec<f64>> {
    let n = cfg.grid.n;
    [13.0 / 32.0, 0.5, 19.0 / 32.0]
        .iter()
        .map(|f| (0..n).map(|k| if k == axis { f * cfg.grid.extent[k] } else { 0.5 * cfg.grid.extent[k] }).collect())
        .collect()
}

/// Transport comparison when the run is an ensemble of `du = sigma Du o dB`
/// from a smoothed step on a torus.
pub fn transport_rows(run: &LoadedRun) -> Result<Option<Vec<TransportRow>>> {
    let cfg = &run.config;
    let se = match &run.standard_error {
        Some(se) => se,
        None => return Ok(None),
    };
    let applies = cfg.model.name == "zero"
        && cfg.noise.kind == NoiseKindSetting::Gradient
        && cfg.noise.scheme == SchemeSetting::Stratonovich
        && cfg.noise.sigma > 0.0
        && cfg.grid_spec()?.is_periodic();
    match (&cfg.run.initial, applies) {
        (InitialCondition::SmoothedStep { axis, eps }, true) => {
            let probes = if cfg.analysis.probes.is_empty() { default_probes(cfg, *axis) } else { cfg.analysis.probes.clone() };
            transport_table(&run.trajectory, se, *axis, *eps, cfg.noise.sigma, &probes).map(Some)
        }
        _ => Ok(None),
    }
}

fn record(kind: &str, run: usize, body: Result<Value>) -> Value {
    match body {
        Ok(v) => json!({"record": kind, "run": run, "result": v}),
        Err(e) => json!({"record": kind, "run": run, "error": e.to_string()}),
    }
}

/// Analyses prior run directories: regularity report, blow-up scan, weak
/// residual of ensemble means and, for transport ensembles, the mean-vs-CDF
/// table. Writes `analysis.ndjson` and `transport_table.csv`.
pub fn cmd_analyze(run_dirs: &[PathBuf], out: &Path, config: Option<&ExperimentConfig>) -> Result<RunArtifacts> {
    let started = start_clock();
    if run_dirs.is_empty() {
        return Err(PnlError::InvalidInput("analyze needs at least one run directory".into()));
    }
    let runs = run_dirs.iter().map(|d| load_run(d, config)).collect::<Result<Vec<_>>>()?;
    let mut lines = Vec::new();
    let mut table = String::new();
    for (i, run) in runs.iter().enumerate() {
        let cfg = &run.config;
        lines.extend(json_line(&json!({
            "record": "run",
            "run": i,
            "dir": run.dir.display().to_string(),
            "kind": run.kind,
            "frames": run.trajectory.len(),
        }))?);
        let opts = cfg.regularity_options();
        let reg = regularity_report(&run.trajectory, &opts).and_then(|r| Ok(serde_json::to_value(r)?));
        lines.extend(json_line(&record("regularity", i, reg))?);
        let scan = serde_json::to_value(blowup_scan(&run.trajectory, cfg.run.blowup_threshold)).map_err(PnlError::from);
        lines.extend(json_line(&record("blowup_scan", i, scan))?);
        if run.kind == "mean" && cfg.analysis.residual {
            let sigma = if cfg.noise.scheme == SchemeSetting::Stratonovich { cfg.gradient_sigma() } else { 0.0 };
            let res = cfg.coefficient_model().and_then(|model| {
                let bank = test_function_bank(run.trajectory.grid())?;
                let rep = mean_pde_residual(&run.trajectory, &model, sigma, &bank)?;
                Ok(json!({"sigma": sigma, "report": rep}))
            });
            lines.extend(json_line(&record("residual", i, res))?);
        }
        if let Some(rows) = transport_rows(run)? {
            if table.is_empty() {
                table.push_str("run,time,node,x,mean,standard_error,oracle,smoothed_oracle,deviation,tolerance,within\n");
            }
            for r in &rows {
                let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
                table.push_str(&format!(
                    "{i},{},{},{},{},{},{},{},{},{},{}\n",
                    r.time,
                    r.node,
                    x.join(" "),
                    r.mean,
                    r.standard_error,
                    r.oracle,
                    r.smoothed_oracle,
                    r.deviation,
                    r.tolerance,
                    r.within
                ));
            }
            let worst = rows.iter().map(|r| r.deviation / r.tolerance).fold(0.0, f64::max);
            lines.extend(json_line(&json!({
                "record": "transport",
                "run": i,
                "rows": rows.len(),
                "all_within": rows.iter().all(|r| r.within),
                "max_deviation_over_tolerance": worst,
            }))?);
        }
    }
    let mut out_dir = RunDir::create(out)?;
    out_dir.write(ANALYSIS_FILE, &lines)?;
    if !table.is_empty() {
        out_dir.write(TRANSPORT_FILE, table.as_bytes())?;
    }
    let inputs = runs.iter().flat_map(|r| r.inputs.iter().cloned()).collect();
    let manifest = out_dir.finish("analyze", &runs[0].config, inputs, started)?;
    Ok(RunArtifacts { dir: out.to_path_buf(), manifest })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub n: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Defaults to `lambda0 / lambda1`.
    pub nu: Option<f64>,
    /// Defaults to `1 / lambda1`.
    pub kappa: Option<f64>,
    pub lh: f64,
    /// Defaults to `2(n + 2)`.
    pub a: Option<f64>,
    pub margin: f64,
    /// Stratonovich intensity for the shifted ratio, if any.
    pub sigma: Option<f64>,
}

impl ThresholdParams {
    pub fn new(n: usize, lambda0: f64, lambda1: f64) -> Self {
        ThresholdParams { n, lambda0, lambda1, nu: None, kappa: None, lh: 0.0, a: None, margin: 0.0, sigma: None }
    }
}

/// Every threshold predicate and the exponent schedule as one record.
pub fn cmd_thresholds(p: &ThresholdParams) -> Result<Value> {
    let (n, l0, l1) = (p.n, p.lambda0, p.lambda1);
    if n == 0 {
        return Err(PnlError::InvalidInput("n must be positive".into()));
    }
    let parabolic = dispersion_ok_parabolic(l0, l1, n)?;
    let nu = p.nu.unwrap_or(l0 / l1);
    let kappa = p.kappa.unwrap_or(1.0 / l1);
    let a = p.a.unwrap_or(2.0 * (n as f64 + 2.0));
    let lh_star = lh_star_n(n, kappa, nu);
    let threshold = 1.0 - 2.0 / n as f64;
    let mut rec = json!({
        "n": n,
        "lambda0": l0,
        "lambda1": l1,
        "kappa": kappa,
        "nu": nu,
        "dispersion_ratio": l0 / l1,
        "parabolic_threshold": threshold,
        "dispersion_ok_parabolic": parabolic,
        "elliptic_dispersion": elliptic_dispersion(l0, l1, n)?,
        "dispersion_ok_elliptic": dispersion_ok_elliptic(l0, l1, n)?,
        "sigma_zero": sigma_zero(l0, l1, n)?,
        "lh": p.lh,
        "lh_star_n": lh_star,
        "noise_admissible": p.lh < lh_star,
        "a": a,
        "q_max": finite_or_null(q_max(n, a)),
        "schedule": cmd_schedule(n, a, nu, kappa, p.lh, p.margin),
    });
    if let Some(sigma) = p.sigma {
        let ratio = shifted_dispersion_ratio(l0, l1, sigma);
        rec["sigma"] = json!(sigma);
        rec["shifted_dispersion_ratio"] = json!(ratio);
        rec["shifted_ok_parabolic"] = json!(ratio > threshold);
    }
    Ok(rec)
}

pub fn cmd_schedule(n: usize, a: f64, nu: f64, kappa: f64, lh: f64, margin: f64) -> IterationSchedule {
    iteration_schedule(n, a, nu, kappa, lh, margin)
}

#[derive(Debug, Clone)]
pub struct LemmaRun {
    pub config: SuiteConfig,
    pub reports: Vec<SuiteReport>,
}

impl LemmaRun {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    /// One line per suite, then a summary line.
    pub fn to_ndjson(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for r in &self.reports {
            out.extend(json_line(&json!({"record": "suite", "report": r}))?);
        }
        out.extend(json_line(&json!({
            "record": "summary",
            "config": self.config,
            "suites": self.reports.len(),
            "checks": self.reports.iter().map(|r| r.checks).sum::<usize>(),
            "violations": self.reports.iter().map(|r| r.violation_count).sum::<usize>(),
            "passed": self.passed(),
        }))?);
        Ok(out)
    }
}

/// Runs the named suites (all when `suites` is empty).
pub fn cmd_verify_lemmas(cfg: &SuiteConfig, suites: &[String]) -> Result<LemmaRun> {
    let names: Vec<String> =
        if suites.is_empty() { SUITE_NAMES.iter().map(|s| s.to_string()).collect() } else { suites.to_vec() };
    let mut reports = Vec::with_capacity(names.len());
    for name in &names {
        let rep = run_suite(name, cfg).ok_or_else(|| {
            PnlError::InvalidInput(format!("unknown suite '{name}', expected one of {}", SUITE_NAMES.join(", ")))
        })?;
        reports.push(rep);
    }
    Ok(LemmaRun { config: cfg.clone(), reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::parse_config;

    #[test]
    fn thresholds_record() {
        let rec = cmd_thresholds(&ThresholdParams::new(3, 1.0, 4.0)).unwrap();
        assert_eq!(rec["dispersion_ok_parabolic"], json!(false));
        assert_eq!(rec["sigma_zero"], json!(1.0));
        assert_eq!(rec["schedule"]["n"], json!(3));
        let mut p = ThresholdParams::new(3, 1.0, 4.0);
        p.sigma = Some(1.0);
        let rec = cmd_thresholds(&p).unwrap();
        assert_eq!(rec["shifted_dispersion_ratio"], json!(1.0 / 3.0));
        assert_eq!(rec["shifted_ok_parabolic"], json!(false));
    }

    #[test]
    fn times_round_trip() {
        let t = vec![0.0, 0.1, 0.30000000000000004];
        assert_eq!(parse_times(&times_csv(&t)).unwrap(), t);
    }

    #[test]
    fn simulate_then_analyze() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config("[grid]\ncells = 16\n[run]\nhorizon = 0.05\nsteps = 20\n").unwrap();
        let sim = cmd_simulate(&cfg, &dir.path().join("sim")).unwrap();
        assert_eq!(sim.manifest.outputs.iter().filter(|o| o.path.starts_with("frame_")).count(), 21);
        let an = cmd_analyze(&[dir.path().join("sim")], &dir.path().join("an"), None).unwrap();
        let text = fs::read_to_string(an.dir.join(ANALYSIS_FILE)).unwrap();
        assert!(text.lines().any(|l| l.contains("\"record\":\"regularity\"") && l.contains("gamma_space")), "{text}");
        assert!(!an.dir.join(TRANSPORT_FILE).exists());
    }

    #[test]
    fn analyze_missing_dir_is_input_error() {
        let err = cmd_analyze(&[PathBuf::from("/nonexistent/run")], Path::new("/tmp/unused"), None).unwrap_err();
        assert!(matches!(err, PnlError::InvalidInput(_)));
    }

    #[test]
    fn unknown_suite_rejected() {
        assert!(cmd_verify_lemmas(&SuiteConfig::default(), &["nope".into()]).is_err());
    }
}
