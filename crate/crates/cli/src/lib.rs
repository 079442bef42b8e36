//! Command-line front end for the `qreduce` simulator.
//!
//! ```text
//! qreduce <trajectory|ensemble|sweep|oracle-check> <config> [key=value ...]
//! ```

pub mod config;
pub mod oracle_check;
pub mod output;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use qreduce::experiment::{
    run_ensemble, run_ensemble_with_workers, run_trajectory, spec_for_coupling, sweep_g, ExperimentError,
    ExperimentSpec,
};
use qreduce::stats::{gaussian_kde, power_law_fit, summarize, Bandwidth};
use serde_json::{json, Map};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
            CliError::OracleFailed(_) => 5,
        }
    }

    pub(crate) fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidSpec(_) | ExperimentError::Analytic(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qreduce",
    version,
    about = "Stochastic state reduction of a two-state system coupled to a field mode"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One path; writes trajectory.csv
    Trajectory(RunArgs),
    /// Many paths; writes paths.csv, summary.json and kde.csv
    Ensemble(RunArgs),
    /// Ensembles over g_list; writes sweep.csv and fit.json
    Sweep(RunArgs),
    /// Checks the integrator against reference solutions; writes report.json
    OracleCheck(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Path to a `key = value` config file
    pub config: PathBuf,
    /// `key=value` overrides applied after the file
    pub overrides: Vec<String>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Trajectory(a) | Command::Ensemble(a) | Command::Sweep(a) | Command::OracleCheck(a) => a,
        }
    }
}

/// Files written by a successful command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

pub fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    for pair in &args.overrides {
        config.apply_override(pair)?;
    }
    Ok(config)
}

pub fn execute(command: &Command) -> Result<RunOutput, CliError> {
    let config = load_config(command.args())?;
    match command {
        Command::Trajectory(_) => trajectory(&config),
        Command::Ensemble(_) => ensemble(&config),
        Command::Sweep(_) => sweep(&config),
        Command::OracleCheck(_) => oracle(&config),
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn echo_params(spec: &ExperimentSpec) -> Map<String, serde_json::Value> {
    let mut m = Map::new();
    m.insert("g".into(), json!(spec.params.g));
    m.insert("lambda".into(), json!(spec.params.lambda));
    m.insert("omega".into(), json!(spec.params.omega));
    m.insert("nu".into(), json!(spec.params.nu));
    m.insert("threshold".into(), json!(spec.threshold));
    m.insert("t_max".into(), json!(spec.t_max));
    m.insert("dt".into(), json!(spec.integrator.dt));
    m.insert("n_max".into(), json!(spec.cutoff.n_max()));
    m.insert("seed".into(), json!(spec.seed));
    m
}

pub fn trajectory(config: &RunConfig) -> Result<RunOutput, CliError> {
    let spec = config.experiment_spec()?;
    info!(
        "trajectory: n_max = {}, t_max = {}",
        spec.cutoff.n_max(),
        spec.t_max
    );
    let record = run_trajectory(&spec, 0)?;
    let files = output::write_outputs(
        &config.resolved_out_dir(),
        &[("trajectory.csv", output::trajectory_csv(&record))],
    )?;
    if let Some(reason) = &record.invalid {
        return Err(CliError::Numeric(reason.clone()));
    }
    Ok(RunOutput { files })
}

pub fn ensemble(config: &RunConfig) -> Result<RunOutput, CliError> {
    let spec = config.experiment_spec()?;
    info!(
        "ensemble: {} paths, n_max = {}, t_max = {}",
        spec.n_paths,
        spec.cutoff.n_max(),
        spec.t_max
    );
    let result = match config.workers {
        Some(n) => run_ensemble_with_workers(&spec, n)?,
        None => run_ensemble(&spec)?,
    };
    let taus = result.stopping_times();
    let median = summarize(&taus, None).ok().map(|s| s.median);
    let kde = gaussian_kde(&taus, Bandwidth::Silverman).ok();
    if kde.is_none() {
        warn!("no path crossed the threshold; kde.csv holds only a header");
    }
    let kde_text = match &kde {
        Some(k) => output::kde_csv(k),
        None => format!("{}\n", output::KDE_COLUMNS.join(",")),
    };
    let files = output::write_outputs(
        &config.resolved_out_dir(),
        &[
            ("paths.csv", output::paths_csv(&result)),
            (
                "summary.json",
                output::summary_json(&result, median, kde.as_ref(), echo_params(&spec)),
            ),
            ("kde.csv", kde_text),
        ],
    )?;
    Ok(RunOutput { files })
}

pub fn sweep(config: &RunConfig) -> Result<RunOutput, CliError> {
    let template = config.experiment_spec()?;
    if config.g_list.is_empty() {
        return Err(CliError::Config("sweep needs a non-empty g_list".into()));
    }
    for &g in &config.g_list {
        spec_for_coupling(&template, g)?;
    }
    let points = with_workers(config.workers, || sweep_g(&template, &config.g_list))??;
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.result.mean_tau.map(|tau| (p.g, tau)))
        .collect();
    let (fit, note) = match power_law_fit(&fit_points) {
        Ok(fit) => {
            info!("fit: k = {:.4}, exponent = {:.4}", fit.k, fit.exponent);
            (Some(fit), None)
        }
        Err(e) => {
            warn!("power-law fit skipped: {e}");
            (None, Some(e.to_string()))
        }
    };
    let files = output::write_outputs(
        &config.resolved_out_dir(),
        &[
            ("sweep.csv", output::sweep_csv(&points)),
            ("fit.json", output::fit_json(fit.as_ref(), &points, note)),
        ],
    )?;
    Ok(RunOutput { files })
}

pub fn oracle(config: &RunConfig) -> Result<RunOutput, CliError> {
    let checks = oracle_check::run_all()?;
    for c in &checks {
        info!(
            "{}: {:.3e} (bound {:.1e}) {}",
            c.name,
            c.metric,
            c.bound,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    let files = output::write_outputs(
        &config.resolved_out_dir(),
        &[("report.json", output::report_json(&checks))],
    )?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(RunOutput { files })
    } else {
        Err(CliError::OracleFailed(failed.join(", ")))
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_command<I, T>(argv: I) -> Result<RunOutput, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli.command)
}
