//! Euler–Maruyama integration of the nonlinear stochastic Schrödinger equation
//!
//! ```text
//! d|ψ⟩ = {(−iH − λ²a†a + λ² ā_t a − ½λ²|a_t|²) dt + λ(a − ½a_t) dB − ½λ ā_t dB*} |ψ⟩
//! ```
//!
//! with `a_t = ⟨ψ|a|ψ⟩` and a complex Wiener increment `dB` satisfying
//! `E[dB dB*] = 2dt`, `E[dB dB] = 0`.
//!
//! The propagator only touches an active window of Fock levels. The window
//! is the support of the state grown by one level per step (the operators
//! are tridiagonal in photon number) and trimmed wherever the edge
//! population has fallen below [`TRIM_POPULATION`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::hilbert::{
    build_operators, observables, HilbertError, ModelParams, ObservableSet, OperatorSet, Spin, StateVector,
};

/// Edge levels whose population (summed over both spins) is below this are zeroed.
pub const TRIM_POPULATION: f64 = 1e-34;

/// Number of top Fock levels watched by the truncation monitor.
pub const MONITORED_LEVELS: usize = 5;

pub const DEFAULT_TRUNCATION_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("non-finite amplitude at t = {t}; the step size is too large")]
    NonFiniteAmplitude { t: f64 },
    #[error(
        "truncation monitor tripped at t = {t}: top-level population {population:e} exceeds {tolerance:e}"
    )]
    CutoffExceeded { t: f64, population: f64, tolerance: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// One increment of the complex Wiener process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub db: Complex64,
}

impl NoiseIncrement {
    /// `dB = ξ₁√dt + iξ₂√dt`.
    pub fn from_normals(xi1: f64, xi2: f64, dt: f64) -> Self {
        let s = dt.sqrt();
        Self {
            db: Complex64::new(xi1 * s, xi2 * s),
        }
    }

    pub fn zero() -> Self {
        Self { db: ZERO }
    }
}

/// Deterministic noise source for one path, keyed by `(seed, path_index)`.
///
/// Each path gets its own ChaCha stream, so the increments of a path do not
/// depend on how many other paths run or in what order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            seed,
            path_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Draws one increment; real part first, then imaginary.
pub fn sample_noise(rng: &mut RngStream, dt: f64) -> NoiseIncrement {
    let xi1 = rng.standard_normal();
    let xi2 = rng.standard_normal();
    NoiseIncrement::from_normals(xi1, xi2, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub renormalize_each_step: bool,
    /// Recording period; must be a whole number of steps.
    pub sample_interval: f64,
    /// Bound on the population of the top [`MONITORED_LEVELS`] Fock levels.
    pub truncation_tolerance: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, sample_interval: f64) -> Result<Self, SdeError> {
        let config = Self {
            dt,
            renormalize_each_step: true,
            sample_interval,
            truncation_tolerance: DEFAULT_TRUNCATION_TOLERANCE,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SdeError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval >= self.dt) {
            return Err(SdeError::InvalidConfig(format!(
                "sample_interval {} must be at least dt {}",
                self.sample_interval, self.dt
            )));
        }
        let ratio = self.sample_interval / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(SdeError::InvalidConfig(format!(
                "sample_interval {} is not a multiple of dt {}",
                self.sample_interval, self.dt
            )));
        }
        if self.truncation_tolerance.is_nan() || self.truncation_tolerance <= 0.0 {
            return Err(SdeError::InvalidConfig(
                "truncation_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.sample_interval / self.dt).round() as usize
    }

    /// Whole steps needed to reach `t_end`.
    pub fn steps_until(&self, t_end: f64) -> usize {
        (t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// In-place stepper holding scratch buffers and the active Fock window.
pub struct Propagator<'a> {
    ops: &'a OperatorSet,
    lambda: f64,
    lo: usize,
    hi: usize,
    a_psi: Vec<Complex64>,
    h_psi: Vec<Complex64>,
    n_psi: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    pub fn new(ops: &'a OperatorSet, params: &ModelParams, state: &StateVector) -> Result<Self, SdeError> {
        let cutoff = ops.cutoff;
        if state.cutoff() != cutoff {
            return Err(HilbertError::DimensionMismatch {
                expected: cutoff.dim(),
                found: state.cutoff().dim(),
            }
            .into());
        }
        let (lo, hi) = support(state).ok_or(HilbertError::ZeroNorm)?;
        let dim = cutoff.dim();
        Ok(Self {
            ops,
            lambda: params.lambda,
            lo,
            hi,
            a_psi: vec![ZERO; dim],
            h_psi: vec![ZERO; dim],
            n_psi: vec![ZERO; dim],
        })
    }

    /// Current active window of photon numbers, inclusive.
    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    /// Advances `psi` by one Euler–Maruyama step and returns the squared norm
    /// before renormalization.
    pub fn step(
        &mut self,
        psi: &mut [Complex64],
        dt: f64,
        noise: NoiseIncrement,
        renormalize: bool,
    ) -> Result<f64, SdeError> {
        let cutoff = self.ops.cutoff;
        let n_max = cutoff.n_max();
        let lo = self.lo.saturating_sub(1);
        let hi = (self.hi + 1).min(n_max);
        let blocks = [
            cutoff.block_rows(Spin::Up, lo..hi + 1),
            cutoff.block_rows(Spin::Down, lo..hi + 1),
        ];

        let mut a_t = ZERO;
        let mut psi_norm_sq = 0.0;
        for rows in blocks.iter().cloned() {
            self.ops.a.apply_rows(rows.clone(), psi, &mut self.a_psi);
            self.ops.h.apply_rows(rows.clone(), psi, &mut self.h_psi);
            self.ops.number.apply_rows(rows.clone(), psi, &mut self.n_psi);
            for r in rows {
                a_t += psi[r].conj() * self.a_psi[r];
                psi_norm_sq += psi[r].norm_sqr();
            }
        }
        a_t /= psi_norm_sq;

        let lam = self.lambda;
        let lam2 = lam * lam;
        let db = noise.db;
        let c_psi = Complex64::new(1.0, 0.0)
            - 0.5 * lam2 * a_t.norm_sqr() * dt
            - 0.5 * lam * a_t * db
            - 0.5 * lam * a_t.conj() * db.conj();
        let c_a = lam2 * a_t.conj() * dt + lam * db;
        let c_h = Complex64::new(0.0, -dt);
        let c_n = -lam2 * dt;

        let mut norm_sq = 0.0;
        for rows in blocks.iter().cloned() {
            for r in rows {
                let z = c_psi * psi[r] + c_a * self.a_psi[r] + c_h * self.h_psi[r] + c_n * self.n_psi[r];
                norm_sq += z.norm_sqr();
                psi[r] = z;
            }
        }
        if !norm_sq.is_finite() || norm_sq <= 0.0 {
            return Err(SdeError::NonFiniteAmplitude { t: f64::NAN });
        }
        if renormalize {
            let inv = 1.0 / norm_sq.sqrt();
            for rows in blocks.iter().cloned() {
                psi[rows].iter_mut().for_each(|z| *z *= inv);
            }
        }

        let (mut lo, mut hi) = (lo, hi);
        let threshold = TRIM_POPULATION * if renormalize { 1.0 } else { norm_sq };
        let level_pop = |psi: &[Complex64], n: usize| {
            psi[cutoff.index(Spin::Up, n)].norm_sqr() + psi[cutoff.index(Spin::Down, n)].norm_sqr()
        };
        while hi > lo && level_pop(psi, hi) < threshold {
            psi[cutoff.index(Spin::Up, hi)] = ZERO;
            psi[cutoff.index(Spin::Down, hi)] = ZERO;
            hi -= 1;
        }
        while lo < hi && level_pop(psi, lo) < threshold {
            psi[cutoff.index(Spin::Up, lo)] = ZERO;
            psi[cutoff.index(Spin::Down, lo)] = ZERO;
            lo += 1;
        }
        self.lo = lo;
        self.hi = hi;
        Ok(norm_sq)
    }
}

/// Lowest and highest photon numbers carrying any amplitude.
fn support(state: &StateVector) -> Option<(usize, usize)> {
    let cutoff = state.cutoff();
    let occupied = |n: usize| Spin::BOTH.iter().any(|&s| state.amplitude(s, n) != ZERO);
    let lo = (0..=cutoff.n_max()).find(|&n| occupied(n))?;
    let hi = (0..=cutoff.n_max()).rev().find(|&n| occupied(n))?;
    Some((lo, hi))
}

/// Result of a single [`em_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub state: StateVector,
    /// `⟨ψ|ψ⟩` after the update, before any renormalization.
    pub norm_sq_before: f64,
}

impl EmStep {
    pub fn norm_drift(&self) -> f64 {
        self.norm_sq_before - 1.0
    }
}

/// One Euler–Maruyama step with `a_t` evaluated on the input state.
pub fn em_step(
    state: &StateVector,
    params: &ModelParams,
    ops: &OperatorSet,
    dt: f64,
    noise: NoiseIncrement,
    renormalize: bool,
) -> Result<EmStep, SdeError> {
    let mut prop = Propagator::new(ops, params, state)?;
    let mut next = state.clone();
    let norm_sq_before = prop
        .step(next.amplitudes_mut(), dt, noise, renormalize)
        .map_err(|e| match e {
            SdeError::NonFiniteAmplitude { .. } => SdeError::NonFiniteAmplitude { t: dt },
            other => other,
        })?;
    Ok(EmStep {
        state: next,
        norm_sq_before,
    })
}

/// One recorded point along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub observables: ObservableSet,
    /// `⟨ψ|ψ⟩ − 1` of the most recent step before renormalization.
    pub norm_drift: f64,
    /// Population of the top [`MONITORED_LEVELS`] Fock levels.
    pub trunc_top5: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormDriftStats {
    pub steps: usize,
    pub mean: f64,
    pub max_abs: f64,
}

impl NormDriftStats {
    fn push(&mut self, drift: f64) {
        self.steps += 1;
        self.mean += (drift - self.mean) / self.steps as f64;
        self.max_abs = self.max_abs.max(drift.abs());
    }
}

/// Observer verdict after each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Halt,
}

/// Recorded evolution of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: StateVector,
    /// Largest top-level population seen at any step.
    pub truncation_max: f64,
    pub norm_drift: NormDriftStats,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

/// Bookkeeping shared by [`evolve`] and the experiment runner.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub final_state: StateVector,
    pub truncation_max: f64,
    pub norm_drift: NormDriftStats,
    /// Set when the integration stopped on an error; samples recorded before it
    /// remain valid.
    pub error: Option<SdeError>,
}

/// Integrates to `t_end`, handing each sample to `observer`.
///
/// Errors are reported in [`Integration::error`] rather than discarding the
/// partial path.
pub fn integrate_with<F>(
    state: &StateVector,
    params: &ModelParams,
    ops: &OperatorSet,
    config: &IntegratorConfig,
    t_end: f64,
    rng: &mut RngStream,
    mut observer: F,
) -> Result<Integration, SdeError>
where
    F: FnMut(&Sample) -> Control,
{
    config.validate()?;
    params.validate()?;
    if t_end.is_nan() || t_end < 0.0 {
        return Err(SdeError::InvalidConfig(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    let mut psi = state.clone();
    let mut prop = Propagator::new(ops, params, &psi)?;
    let steps = config.steps_until(t_end);
    let per_sample = config.steps_per_sample();
    let tol = config.truncation_tolerance;

    let mut drift_stats = NormDriftStats::default();
    let top = psi.top_population(MONITORED_LEVELS);
    let mut truncation_max = top;
    let mut outcome = Integration {
        final_state: psi.clone(),
        truncation_max,
        norm_drift: drift_stats,
        error: None,
    };
    if top > tol {
        outcome.error = Some(SdeError::CutoffExceeded {
            t: 0.0,
            population: top,
            tolerance: tol,
        });
        return Ok(outcome);
    }
    let first = Sample {
        t: 0.0,
        observables: observables(&psi, ops),
        norm_drift: 0.0,
        trunc_top5: top,
    };
    if observer(&first) == Control::Halt {
        return Ok(outcome);
    }

    let mut error = None;
    for step in 1..=steps {
        let t = step as f64 * config.dt;
        let noise = sample_noise(rng, config.dt);
        let last_drift;
        match prop.step(
            psi.amplitudes_mut(),
            config.dt,
            noise,
            config.renormalize_each_step,
        ) {
            Ok(norm_sq) => {
                last_drift = norm_sq - 1.0;
                drift_stats.push(last_drift);
            }
            Err(SdeError::NonFiniteAmplitude { .. }) => {
                error = Some(SdeError::NonFiniteAmplitude { t });
                break;
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
        let top = psi.top_population(MONITORED_LEVELS);
        truncation_max = truncation_max.max(top);
        if top > tol {
            error = Some(SdeError::CutoffExceeded {
                t,
                population: top,
                tolerance: tol,
            });
            break;
        }
        if step % per_sample == 0 || step == steps {
            let sample = Sample {
                t,
                observables: observables(&psi, ops),
                norm_drift: last_drift,
                trunc_top5: top,
            };
            if observer(&sample) == Control::Halt {
                break;
            }
        }
    }
    outcome.final_state = psi;
    outcome.truncation_max = truncation_max;
    outcome.norm_drift = drift_stats;
    outcome.error = error;
    Ok(outcome)
}

/// Evolves `state` to `t_end`, recording observables every sample interval
/// (and at `t_end` itself).
pub fn evolve(
    state: &StateVector,
    params: &ModelParams,
    config: &IntegratorConfig,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<Trajectory, SdeError> {
    let ops = build_operators(params, state.cutoff());
    evolve_with_operators(state, params, &ops, config, t_end, rng)
}

pub fn evolve_with_operators(
    state: &StateVector,
    params: &ModelParams,
    ops: &OperatorSet,
    config: &IntegratorConfig,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<Trajectory, SdeError> {
    let mut samples = Vec::new();
    let run = integrate_with(state, params, ops, config, t_end, rng, |s| {
        samples.push(*s);
        Control::Continue
    })?;
    if let Some(err) = run.error {
        return Err(err);
    }
    Ok(Trajectory {
        samples,
        final_state: run.final_state,
        truncation_max: run.truncation_max,
        norm_drift: run.norm_drift,
    })
}
