//! Self-test of the integrator and closed forms against independent
//! references (dense matrix exponential, RK4) at fixed reference parameters.

use num_complex::Complex64;
use qreduce::analytic::{
    decay_solution, predicted_moments, solution_g_dominated, solution_g_zero, BranchSpec,
};
use qreduce::experiment::initial_state;
use qreduce::hilbert::{
    build_operators, coherent_state, compose, observables, FockCutoff, ModelParams, Spin, StateVector,
};
use qreduce::oracle::{infidelity, rk4_linear, schrodinger_propagate};
use qreduce::sde::{evolve, IntegratorConfig, RngStream};

use crate::output::CheckOutcome;
use crate::CliError;

pub const CLOSED_FORM_TOLERANCE: f64 = 1e-8;
pub const SCHRODINGER_LIMIT_TOLERANCE: f64 = 1e-6;
pub const MOMENT_TOLERANCE: f64 = 0.05;
pub const DECAY_TOLERANCE: f64 = 0.01;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn outcome(name: &str, metric: f64, bound: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        metric,
        bound,
        pass: metric.is_finite() && metric <= bound,
    }
}

fn cutoff(n: usize) -> Result<FockCutoff, CliError> {
    FockCutoff::new(n).map_err(CliError::numeric)
}

fn params(omega: f64, nu: f64, g: f64, lambda: f64) -> Result<ModelParams, CliError> {
    ModelParams::new(omega, nu, g, lambda).map_err(CliError::numeric)
}

/// `max_t |⟨closed|expm⟩ − 1|` for the free solution.
pub fn g_zero_against_expm() -> Result<f64, CliError> {
    let cut = cutoff(30)?;
    let p = params(0.5, 0.5, 0.0, 0.0)?;
    let ops = build_operators(&p, cut);
    let spec = BranchSpec::new(c(0.6, 0.0), c(0.0, 0.8), c(1.0, -0.5)).map_err(CliError::numeric)?;
    let psi0 = initial_state(&spec, cut).map_err(CliError::numeric)?;
    let mut worst: f64 = 0.0;
    for t in [0.3, 1.0, 2.5] {
        let exact = schrodinger_propagate(&ops.h, &psi0, t);
        let closed = solution_g_zero(&spec, p.omega, p.nu, t, cut).map_err(CliError::numeric)?;
        worst = worst.max((closed.inner(&exact) - c(1.0, 0.0)).norm());
    }
    Ok(worst)
}

/// `max_t |⟨closed|expm⟩ − 1|` for the coupling-only solution, phases included.
pub fn g_dominated_against_expm() -> Result<f64, CliError> {
    let cut = cutoff(30)?;
    let g = 1.0;
    let ops = build_operators(&params(0.0, 0.0, g, 0.0)?, cut);
    let mut worst: f64 = 0.0;
    for spec in [
        BranchSpec::equal(c(1.0, 0.0)),
        BranchSpec::new(c(0.6, 0.0), c(0.0, 0.8), c(0.7, 0.3)).map_err(CliError::numeric)?,
    ] {
        let psi0 = initial_state(&spec, cut).map_err(CliError::numeric)?;
        for t in [0.25, 0.5, 1.0] {
            let exact = schrodinger_propagate(&ops.h, &psi0, t);
            let closed = solution_g_dominated(&spec, g, t, cut).map_err(CliError::numeric)?;
            worst = worst.max((closed.inner(&exact) - c(1.0, 0.0)).norm());
        }
    }
    Ok(worst)
}

/// Infidelity between the two-cat decay solution and RK4 on `−λ² a†a`.
pub fn decay_against_rk4() -> Result<f64, CliError> {
    let cut = cutoff(45)?;
    let (lambda, t) = (0.3, 2.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let components = [(c(h, 0.0), c(3.0, 0.0)), (c(h, 0.0), c(-3.0, 0.0))];
    let solution = decay_solution(&components, lambda, t, cut).map_err(CliError::numeric)?;
    let start = decay_solution(&components, lambda, 0.0, cut).map_err(CliError::numeric)?;
    let psi0 = start.state(Spin::Up).map_err(CliError::numeric)?;
    let ops = build_operators(&params(0.0, 0.0, 0.0, lambda)?, cut);
    let rk = rk4_linear(&ops.number, c(-lambda * lambda, 0.0), psi0.amplitudes(), t, 4000);
    let rk = StateVector::new(cut, rk).map_err(CliError::numeric)?;
    infidelity(&solution.state(Spin::Up).map_err(CliError::numeric)?, &rk).map_err(CliError::numeric)
}

/// Worst relative error of `Var(a)` and `Cov` against their early-time forms.
pub fn moments_against_closed_form() -> Result<f64, CliError> {
    let spec = BranchSpec::equal(c(4.0, 0.0));
    let mut worst: f64 = 0.0;
    for (g, t) in [(4.0, 0.5), (3.0, 0.5), (1.0, 1.0)] {
        let cut = FockCutoff::auto(4.0, g, t);
        let state = solution_g_dominated(&spec, g, t, cut).map_err(CliError::numeric)?;
        let obs = observables(&state, &build_operators(&params(0.0, 0.0, g, 0.0)?, cut));
        let predicted = predicted_moments(g, t, spec.p1(), spec.p2());
        worst = worst
            .max(((obs.var_a - predicted.var_a) / predicted.var_a).abs())
            .max(((obs.cov_current_field - predicted.cov) / predicted.cov).abs());
    }
    Ok(worst)
}

/// Infidelity between the integrator at `λ = 0` and the matrix exponential.
pub fn schrodinger_limit(dt: f64) -> Result<f64, CliError> {
    let cut = cutoff(20)?;
    let p = params(0.5, 0.5, 1.0, 0.0)?;
    let spec = BranchSpec::equal(c(1.0, 0.0));
    let psi0 = initial_state(&spec, cut).map_err(CliError::numeric)?;
    let t = 1.0;
    let config = IntegratorConfig::new(dt, t).map_err(CliError::numeric)?;
    let run = evolve(&psi0, &p, &config, t, &mut RngStream::new(1, 0)).map_err(CliError::numeric)?;
    let exact = schrodinger_propagate(&build_operators(&p, cut).h, &psi0, t);
    infidelity(&run.final_state, &exact).map_err(CliError::numeric)
}

/// Relative error of `|⟨a⟩|` against `|α| e^{−λ²t}` along one noisy path
/// started in a coherent state.
pub fn eigenstate_decay() -> Result<f64, CliError> {
    let cut = cutoff(30)?;
    let (lambda, alpha) = (0.2, 2.0);
    let p = params(0.0, 0.0, 0.0, lambda)?;
    let field = coherent_state(c(alpha, 0.0), cut).map_err(CliError::numeric)?;
    let psi0 = compose([c(1.0, 0.0), c(0.0, 0.0)], &field, cut).map_err(CliError::numeric)?;
    let config = IntegratorConfig::new(1e-3, 0.5).map_err(CliError::numeric)?;
    let run = evolve(&psi0, &p, &config, 5.0, &mut RngStream::new(7, 0)).map_err(CliError::numeric)?;
    let worst = run
        .samples
        .iter()
        .map(|s| {
            let expected = alpha * (-lambda * lambda * s.t).exp();
            (s.observables.a_mean.norm() - expected).abs() / expected
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

pub fn run_all() -> Result<Vec<CheckOutcome>, CliError> {
    Ok(vec![
        outcome(
            "free_solution_vs_matrix_exponential",
            g_zero_against_expm()?,
            CLOSED_FORM_TOLERANCE,
        ),
        outcome(
            "coupling_solution_vs_matrix_exponential",
            g_dominated_against_expm()?,
            CLOSED_FORM_TOLERANCE,
        ),
        outcome("cat_decay_vs_rk4", decay_against_rk4()?, CLOSED_FORM_TOLERANCE),
        outcome(
            "early_time_moments",
            moments_against_closed_form()?,
            MOMENT_TOLERANCE,
        ),
        outcome(
            "integrator_schrodinger_limit",
            schrodinger_limit(1e-4)?,
            SCHRODINGER_LIMIT_TOLERANCE,
        ),
        outcome("coherent_state_decay", eigenstate_decay()?, DECAY_TOLERANCE),
    ])
}
