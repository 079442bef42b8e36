//! Current-superposition experiment: single trajectories, Monte-Carlo
//! ensembles with first-passage stopping times, and coupling sweeps.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{self, correlated_state, AnalyticError, BranchSpec};
use crate::hilbert::{
    build_operators, coherent_state, CurrentSign, FockCutoff, HilbertError, ModelParams, OperatorSet,
    StateVector,
};
use crate::sde::{integrate_with, Control, IntegratorConfig, NormDriftStats, RngStream, Sample, SdeError};
use crate::stats::{summarize, StatsError};

pub const DEFAULT_THRESHOLD: f64 = 0.99;

/// Sweep horizon in units of the predicted induced reduction time.
pub const SWEEP_HORIZON_FACTOR: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("path {path_index} is invalid: {reason}")]
    EnsembleInvalid { path_index: u64, reason: String },
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub params: ModelParams,
    pub branch: BranchSpec,
    pub cutoff: FockCutoff,
    pub integrator: IntegratorConfig,
    pub t_max: f64,
    /// Reduction threshold on `|⟨σx⟩|`.
    pub threshold: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// When set, a path stops this long after its stopping time instead of
    /// running on to `t_max`.
    pub halt_after: Option<f64>,
}

impl ExperimentSpec {
    /// Spec with the cutoff derived from `α`, `g` and `t_max`.
    pub fn with_auto_cutoff(
        params: ModelParams,
        branch: BranchSpec,
        integrator: IntegratorConfig,
        t_max: f64,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        Self {
            params,
            branch,
            cutoff: FockCutoff::auto(branch.alpha.norm(), params.g, t_max),
            integrator,
            t_max,
            threshold: DEFAULT_THRESHOLD,
            n_paths,
            seed,
            halt_after: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.params.validate()?;
        self.branch.validate()?;
        self.integrator.validate()?;
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(ExperimentError::InvalidSpec(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        // threshold 0 is accepted as the degenerate "stop at the first sample" case
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(ExperimentError::InvalidSpec(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        if self.n_paths == 0 {
            return Err(ExperimentError::InvalidSpec("n_paths must be at least 1".into()));
        }
        if let Some(h) = self.halt_after {
            if h.is_nan() || h < 0.0 {
                return Err(ExperimentError::InvalidSpec(format!(
                    "halt_after must be non-negative, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// `c1 |+x⟩|α⟩ + c2 |−x⟩|α⟩`.
pub fn initial_state(branch: &BranchSpec, cutoff: FockCutoff) -> Result<StateVector, ExperimentError> {
    branch.validate()?;
    let field = coherent_state(branch.alpha, cutoff)?;
    Ok(correlated_state(branch.c1, &field, branch.c2, &field, cutoff)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub path_index: u64,
    pub samples: Vec<Sample>,
    /// First sample time with `|⟨σx⟩| > threshold`.
    pub stopping_time: Option<f64>,
    pub outcome: Option<CurrentSign>,
    pub truncation_max: f64,
    pub norm_drift: NormDriftStats,
    /// Why the path was cut short, when the truncation monitor tripped.
    pub invalid: Option<String>,
    pub final_state: StateVector,
}

impl TrajectoryRecord {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }
}

/// Runs path `path_index` with the spec's operators built fresh.
pub fn run_trajectory(spec: &ExperimentSpec, path_index: u64) -> Result<TrajectoryRecord, ExperimentError> {
    spec.validate()?;
    let ops = build_operators(&spec.params, spec.cutoff);
    let psi0 = initial_state(&spec.branch, spec.cutoff)?;
    trajectory_from(spec, &ops, &psi0, path_index)
}

fn trajectory_from(
    spec: &ExperimentSpec,
    ops: &OperatorSet,
    psi0: &StateVector,
    path_index: u64,
) -> Result<TrajectoryRecord, ExperimentError> {
    let mut rng = RngStream::new(spec.seed, path_index);
    let mut samples = Vec::new();
    let mut stop: Option<(f64, CurrentSign)> = None;
    let run = integrate_with(
        psi0,
        &spec.params,
        ops,
        &spec.integrator,
        spec.t_max,
        &mut rng,
        |s| {
            samples.push(*s);
            let sx = s.observables.sx_mean;
            if stop.is_none() && sx.abs() > spec.threshold {
                stop = Some((s.t, CurrentSign::of(sx)));
            }
            match (stop, spec.halt_after) {
                (Some((tau, _)), Some(h)) if s.t >= tau + h - 1e-9 => Control::Halt,
                _ => Control::Continue,
            }
        },
    )?;
    let invalid = match run.error {
        None => None,
        Some(e @ SdeError::CutoffExceeded { .. }) => Some(e.to_string()),
        Some(e) => return Err(e.into()),
    };
    Ok(TrajectoryRecord {
        path_index,
        samples,
        stopping_time: stop.map(|s| s.0),
        outcome: stop.map(|s| s.1),
        truncation_max: run.truncation_max,
        norm_drift: run.norm_drift,
        invalid,
        final_state: run.final_state,
    })
}

/// All paths `0..n_paths` in parallel, returned in path order.
pub fn run_paths(spec: &ExperimentSpec) -> Result<Vec<TrajectoryRecord>, ExperimentError> {
    spec.validate()?;
    let ops = build_operators(&spec.params, spec.cutoff);
    let psi0 = initial_state(&spec.branch, spec.cutoff)?;
    (0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| trajectory_from(spec, &ops, &psi0, i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub path_index: u64,
    pub stopping_time: Option<f64>,
    pub outcome: Option<CurrentSign>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub paths: Vec<PathOutcome>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_unreduced: usize,
    /// Statistics over reduced paths only.
    pub mean_tau: Option<f64>,
    pub std_tau: Option<f64>,
    pub stderr_tau: Option<f64>,
}

impl EnsembleResult {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_reduced(&self) -> usize {
        self.n_plus + self.n_minus
    }

    pub fn stopping_times(&self) -> Vec<f64> {
        self.paths.iter().filter_map(|p| p.stopping_time).collect()
    }

    /// Aggregates records in path order; fails if any path is invalid.
    pub fn from_records(records: &[TrajectoryRecord]) -> Result<Self, ExperimentError> {
        if let Some(bad) = records.iter().find(|r| !r.is_valid()) {
            return Err(ExperimentError::EnsembleInvalid {
                path_index: bad.path_index,
                reason: bad.invalid.clone().unwrap_or_default(),
            });
        }
        let mut paths: Vec<PathOutcome> = records
            .iter()
            .map(|r| PathOutcome {
                path_index: r.path_index,
                stopping_time: r.stopping_time,
                outcome: r.outcome,
            })
            .collect();
        paths.sort_by_key(|p| p.path_index);
        let count = |s| paths.iter().filter(|p| p.outcome == Some(s)).count();
        let (n_plus, n_minus) = (count(CurrentSign::Plus), count(CurrentSign::Minus));
        let taus: Vec<f64> = paths.iter().filter_map(|p| p.stopping_time).collect();
        let summary = if taus.is_empty() {
            None
        } else {
            Some(summarize(&taus, None)?)
        };
        Ok(Self {
            n_plus,
            n_minus,
            n_unreduced: paths.len() - n_plus - n_minus,
            mean_tau: summary.as_ref().map(|s| s.mean),
            std_tau: summary.as_ref().and_then(|s| s.std),
            stderr_tau: summary.as_ref().and_then(|s| s.stderr),
            paths,
        })
    }
}

pub fn run_ensemble(spec: &ExperimentSpec) -> Result<EnsembleResult, ExperimentError> {
    EnsembleResult::from_records(&run_paths(spec)?)
}

/// [`run_ensemble`] on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    spec: &ExperimentSpec,
    workers: usize,
) -> Result<EnsembleResult, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::InvalidSpec(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_ensemble(spec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub g: f64,
    pub t_max: f64,
    pub n_max: usize,
    pub result: EnsembleResult,
}

impl SweepPoint {
    pub fn n_paths(&self) -> usize {
        self.result.n_paths()
    }
}

/// The template's spec re-targeted at coupling `g`: `t_max` is
/// [`SWEEP_HORIZON_FACTOR`] predicted reduction times and the cutoff is
/// re-derived for that horizon.
pub fn spec_for_coupling(template: &ExperimentSpec, g: f64) -> Result<ExperimentSpec, ExperimentError> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(ExperimentError::InvalidSpec(format!(
            "sweep couplings must be positive, got {g}"
        )));
    }
    let params = template.params.with_g(g);
    let scales = analytic::predicted_scales(&params, &template.branch, 0.0, Complex64::new(0.0, 0.0))?;
    let t_max = SWEEP_HORIZON_FACTOR * scales.tau_sigma;
    Ok(ExperimentSpec {
        params,
        t_max,
        cutoff: FockCutoff::auto(template.branch.alpha.norm(), g, t_max),
        ..template.clone()
    })
}

pub fn sweep_g(template: &ExperimentSpec, g_values: &[f64]) -> Result<Vec<SweepPoint>, ExperimentError> {
    g_values
        .iter()
        .map(|&g| {
            let spec = spec_for_coupling(template, g)?;
            Ok(SweepPoint {
                g,
                t_max: spec.t_max,
                n_max: spec.cutoff.n_max(),
                result: run_ensemble(&spec)?,
            })
        })
        .collect()
}
