use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnl_core::experiment::{
    cmd_analyze, cmd_ensemble, cmd_schedule, cmd_simulate, cmd_thresholds, cmd_verify_lemmas, load_config,
    ExperimentConfig, RunArtifacts, ThresholdParams,
};
use pnl_core::lemmas::suite::SuiteConfig;
use pnl_core::PnlError;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Numerical laboratory for stochastic parabolic systems.
#[derive(Debug, Parser)]
#[command(name = "pnl", version)]
struct Cli {
    /// Log applied defaults and progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate path 0 of a configured experiment.
    Simulate(RunArgs),
    /// Run a Monte Carlo ensemble and store its moments.
    Ensemble(EnsembleArgs),
    /// Analyse prior run directories.
    Analyze(AnalyzeArgs),
    /// Run the randomized lemma property suites.
    VerifyLemmas(LemmaArgs),
    /// Print every threshold predicate and the exponent schedule.
    Thresholds(ThresholdArgs),
    /// Print the exponent iteration schedule.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (TOML, or a manifest.json of a previous run).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long, env = "PNL_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of paths; overrides `run.paths`.
    #[arg(short = 'm', long)]
    paths: Option<usize>,
    /// Worker threads (0: all cores); overrides `run.workers`.
    #[arg(short, long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run directories written by `simulate` or `ensemble`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Configuration to use instead of each run's own `config.toml`.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LemmaArgs {
    /// Random draws per parameter set.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    /// Seed of the random draws.
    #[arg(long, env = "PNL_SEED", default_value_t = 0)]
    seed: u64,
    /// Suites to run (repeatable); all by default.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Relative slack on the inequalities.
    #[arg(long, default_value_t = 1e-10)]
    slack: f64,
    /// Negative control: test against a wrong angle constant.
    #[arg(long, hide = true)]
    force_wrong_mu: bool,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Spatial dimension.
    #[arg(long)]
    n: usize,
    /// Ellipticity constant.
    #[arg(long)]
    lambda0: f64,
    /// Upper bound of the coefficient matrix.
    #[arg(long)]
    lambda1: f64,
    /// Defaults to lambda0 / lambda1.
    #[arg(long)]
    nu: Option<f64>,
    /// Defaults to 1 / lambda1.
    #[arg(long)]
    kappa: Option<f64>,
    /// Noise Lipschitz constant.
    #[arg(long, default_value_t = 0.0)]
    lh: f64,
    /// Defaults to 2(n + 2).
    #[arg(long)]
    a: Option<f64>,
    /// Offset of q* from the middle of its admissible interval, in (-1/2, 1/2).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    margin: f64,
    /// Stratonovich intensity for the shifted dispersion ratio.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Spatial dimension.
    #[arg(long)]
    n: usize,
    /// Integrability exponent of the source; must exceed n + 2.
    #[arg(long)]
    a: f64,
    /// Dispersion constant in (0, 1].
    #[arg(long)]
    nu: f64,
    /// Ellipticity of the contraction form.
    #[arg(long)]
    kappa: f64,
    /// Noise Lipschitz constant.
    #[arg(long, default_value_t = 0.0)]
    lh: f64,
    /// Offset of q* from the middle of its admissible interval, in (-1/2, 1/2).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    margin: f64,
}

enum Failure {
    Violation(String),
    Error(PnlError),
}

impl From<PnlError> for Failure {
    fn from(e: PnlError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(e: &PnlError) -> u8 {
    match e {
        PnlError::Config(_)
        | PnlError::Stability(_)
        | PnlError::InvalidInput(_)
        | PnlError::InvalidGrid(_)
        | PnlError::InvalidEllipticity(_)
        | PnlError::InvalidExponent(_)
        | PnlError::InvalidShift(_)
        | PnlError::InvalidRegion(_)
        | PnlError::UnsupportedBoundary(_)
        | PnlError::Domain(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, PnlError> {
    let cfg = load_config(&args.config)?;
    match args.seed {
        Some(s) => cfg.with_seed(s),
        None => Ok(cfg),
    }
}

fn report(art: &RunArtifacts) -> Result<(), Failure> {
    let line = serde_json::json!({
        "experiment_id": art.manifest.experiment_id,
        "dir": art.dir.display().to_string(),
        "outputs": art.manifest.outputs.len(),
    });
    println!("{line}");
    Ok(())
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => report(&cmd_simulate(&load(&args)?, &args.out)?),
        Command::Ensemble(args) => {
            let mut cfg = load(&args.run)?;
            if let Some(m) = args.paths {
                cfg.run.paths = m;
            }
            if let Some(w) = args.workers {
                cfg.run.workers = w;
            }
            cfg.validate()?;
            report(&cmd_ensemble(&cfg, &args.run.out)?)
        }
        Command::Analyze(args) => {
            let cfg = args.config.as_deref().map(load_config).transpose()?;
            report(&cmd_analyze(&args.runs, &args.out, cfg.as_ref())?)
        }
        Command::VerifyLemmas(args) => {
            let cfg = SuiteConfig {
                draws: args.draws,
                seed: args.seed,
                slack: args.slack,
                force_wrong_mu: args.force_wrong_mu,
                ..SuiteConfig::default()
            };
            let result = cmd_verify_lemmas(&cfg, &args.suites)?;
            emit(&result.to_ndjson()?, args.out.as_deref())?;
            if result.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = result.reports.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
                Err(Failure::Violation(format!("violations in suites: {}", failed.join(", "))))
            }
        }
        Command::Thresholds(args) => {
            let params = ThresholdParams {
                n: args.n,
                lambda0: args.lambda0,
                lambda1: args.lambda1,
                nu: args.nu,
                kappa: args.kappa,
                lh: args.lh,
                a: args.a,
                margin: args.margin,
                sigma: args.sigma,
            };
            println!("{}", cmd_thresholds(&params)?);
            Ok(())
        }
        Command::Schedule(args) => {
            let s = cmd_schedule(args.n, args.a, args.nu, args.kappa, args.lh, args.margin);
            println!("{}", serde_json::to_string(&s)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("pnl: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(Failure::Error(e)) => {
            eprintln!("pnl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
