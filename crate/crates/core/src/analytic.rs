//! Closed-form limit solutions and predicted time-scales.
//!
//! Branch coefficients use the probability convention: the current
//! eigenvectors are normalized and `|c1|² + |c2|² = 1`, so `p_i = |c_i|²`.

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{
    coherent_state, compose, current_eigenstate, CurrentSign, FockCutoff, HilbertError, ModelParams, Spin,
    StateVector,
};

/// Minimum separation `|α_i − α_j|` for coherent components to count as
/// nearly orthogonal (overlap at most `e^{-8}`).
pub const NEAR_ORTHOGONAL_SEPARATION: f64 = 4.0;

const BRANCH_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("branch weights |c1|^2 + |c2|^2 = {0} are not normalized")]
    UnnormalizedBranches(f64),
    #[error("no superposition to reduce: p1·p2 = 0")]
    DegenerateBranch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Initial superposition of current eigenstates with a shared coherent field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSpec {
    pub c1: Complex64,
    pub c2: Complex64,
    pub alpha: Complex64,
}

impl BranchSpec {
    pub fn new(c1: Complex64, c2: Complex64, alpha: Complex64) -> Result<Self, AnalyticError> {
        let spec = Self { c1, c2, alpha };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal-probability branches, `c1 = c2 = 1/√2`.
    pub fn equal(alpha: Complex64) -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { c1: h, c2: h, alpha }
    }

    /// Real branch amplitudes `√p1`, `√(1 − p1)`.
    pub fn with_probability(p1: f64, alpha: Complex64) -> Result<Self, AnalyticError> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(AnalyticError::InvalidParameter(format!(
                "p1 = {p1} outside [0, 1]"
            )));
        }
        Self::new(
            Complex64::new(p1.sqrt(), 0.0),
            Complex64::new((1.0 - p1).sqrt(), 0.0),
            alpha,
        )
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        let total = self.c1.norm_sqr() + self.c2.norm_sqr();
        if !total.is_finite() || (total - 1.0).abs() > BRANCH_NORM_TOLERANCE {
            return Err(AnalyticError::UnnormalizedBranches(total));
        }
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite()) {
            return Err(AnalyticError::InvalidParameter("alpha is not finite".into()));
        }
        Ok(())
    }

    pub fn p1(&self) -> f64 {
        self.c1.norm_sqr()
    }

    pub fn p2(&self) -> f64 {
        self.c2.norm_sqr()
    }

    /// Branches exchanged, `c1 ↔ c2`.
    pub fn swapped(&self) -> Self {
        Self {
            c1: self.c2,
            c2: self.c1,
            alpha: self.alpha,
        }
    }
}

/// `c1 |+x⟩ ⊗ field1 + c2 |−x⟩ ⊗ field2`, renormalized.
pub(crate) fn correlated_state(
    c1: Complex64,
    field1: &[Complex64],
    c2: Complex64,
    field2: &[Complex64],
    cutoff: FockCutoff,
) -> Result<StateVector, HilbertError> {
    let plus = compose(current_eigenstate(CurrentSign::Plus), field1, cutoff)?;
    let minus = compose(current_eigenstate(CurrentSign::Minus), field2, cutoff)?;
    let amps = plus
        .amplitudes()
        .iter()
        .zip(minus.amplitudes())
        .map(|(p, m)| c1 * p + c2 * m)
        .collect();
    StateVector::new(cutoff, amps)
}

/// Free evolution under `ω a†a + ½ν σz` (no coupling).
pub fn solution_g_zero(
    spec: &BranchSpec,
    omega: f64,
    nu: f64,
    t: f64,
    cutoff: FockCutoff,
) -> Result<StateVector, AnalyticError> {
    spec.validate()?;
    let theta = 0.5 * nu * t;
    let (cos, sin) = (theta.cos(), theta.sin());
    let i = Complex64::i();
    let c1 = spec.c1 * cos - i * spec.c2 * sin;
    let c2 = spec.c2 * cos - i * spec.c1 * sin;
    let field = coherent_state(spec.alpha * Complex64::from_polar(1.0, -omega * t), cutoff)?;
    Ok(correlated_state(c1, &field, c2, &field, cutoff)?)
}

/// Evolution under `g σx (a + a†)` alone.
///
/// `exp{−iθ(a + a†)} = D(−iθ)` gives each branch the phase `−θ Re α`, with
/// `θ = +gt` on the `σx = +1` branch and `−gt` on the other.
pub fn solution_g_dominated(
    spec: &BranchSpec,
    g: f64,
    t: f64,
    cutoff: FockCutoff,
) -> Result<StateVector, AnalyticError> {
    spec.validate()?;
    let gt = g * t;
    let shift = Complex64::new(0.0, gt);
    let field1 = coherent_state(spec.alpha - shift, cutoff)?;
    let field2 = coherent_state(spec.alpha + shift, cutoff)?;
    let phi1 = -gt * spec.alpha.re;
    let phi2 = gt * spec.alpha.re;
    Ok(correlated_state(
        spec.c1 * Complex64::from_polar(1.0, phi1),
        &field1,
        spec.c2 * Complex64::from_polar(1.0, phi2),
        &field2,
        cutoff,
    )?)
}

/// Solution of `dψ/dt = −λ² a†a ψ` from a superposition of coherent states.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySolution {
    /// Unnormalized field amplitudes.
    pub field: Vec<Complex64>,
    /// `exp{½(|α_i e^{−λ²t}|² − |α_i|²)}` per component.
    pub weights: Vec<f64>,
    /// `α_i e^{−λ²t}` per component.
    pub centers: Vec<Complex64>,
    pub cutoff: FockCutoff,
}

impl DecaySolution {
    /// Normalized composite state with the two-state system in `spin`.
    pub fn state(&self, spin: Spin) -> Result<StateVector, HilbertError> {
        let mut s = [Complex64::new(0.0, 0.0); 2];
        s[spin.index()] = Complex64::new(1.0, 0.0);
        compose(s, &self.field, self.cutoff)
    }
}

pub fn decay_solution(
    components: &[(Complex64, Complex64)],
    lambda: f64,
    t: f64,
    cutoff: FockCutoff,
) -> Result<DecaySolution, AnalyticError> {
    if components.is_empty() {
        return Err(AnalyticError::InvalidParameter("no components".into()));
    }
    for (i, (_, ai)) in components.iter().enumerate() {
        for (_, aj) in &components[i + 1..] {
            if (ai - aj).norm() < NEAR_ORTHOGONAL_SEPARATION {
                return Err(AnalyticError::InvalidParameter(format!(
                    "components {ai} and {aj} are closer than {NEAR_ORTHOGONAL_SEPARATION}"
                )));
            }
        }
    }
    let shrink = (-lambda * lambda * t).exp();
    let mut field = vec![Complex64::new(0.0, 0.0); cutoff.field_dim()];
    let mut weights = Vec::with_capacity(components.len());
    let mut centers = Vec::with_capacity(components.len());
    for &(c, alpha) in components {
        let center = alpha * shrink;
        let w = (0.5 * (center.norm_sqr() - alpha.norm_sqr())).exp();
        let coherent = coherent_state(center, cutoff)?;
        for (f, z) in field.iter_mut().zip(&coherent) {
            *f += c * w * z;
        }
        weights.push(w);
        centers.push(center);
    }
    Ok(DecaySolution {
        field,
        weights,
        centers,
        cutoff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedMoments {
    pub var_a: f64,
    pub cov: f64,
}

/// Early-time moments of the correlated state: `Var(a) = 4g²t²p1p2`,
/// `Cov(σx, −i(a − a†)) = −8gt p1p2`.
pub fn predicted_moments(g: f64, t: f64, p1: f64, p2: f64) -> PredictedMoments {
    let pp = p1 * p2;
    PredictedMoments {
        var_a: 4.0 * g * g * t * t * pp,
        cov: -8.0 * g * t * pp,
    }
}

/// Order-of-magnitude time-scales; the implicit O(1) constants are set to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedScales {
    /// Field reduction time from the initial moments; infinite when the field
    /// starts with zero variance.
    pub tau_a: f64,
    /// Transition time from coupling- to reduction-dominated dynamics.
    pub s: f64,
    /// Induced reduction time of the current, `(λ²g²p1p2)^{−1/3}`.
    pub tau_sigma: f64,
    /// `Var(a) ≈ var_growth_rate · t²`.
    pub var_growth_rate: f64,
    /// `|Cov| ≈ cov_growth_rate · t`.
    pub cov_growth_rate: f64,
}

pub fn predicted_scales(
    params: &ModelParams,
    spec: &BranchSpec,
    var0: f64,
    delta2_0: Complex64,
) -> Result<PredictedScales, AnalyticError> {
    spec.validate()?;
    let lam2 = params.lambda * params.lambda;
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(AnalyticError::InvalidParameter(format!(
            "lambda must be positive, got {}",
            params.lambda
        )));
    }
    if params.g == 0.0 {
        return Err(AnalyticError::InvalidParameter("g must be nonzero".into()));
    }
    if var0 < 0.0 {
        return Err(AnalyticError::InvalidParameter(format!(
            "negative variance {var0}"
        )));
    }
    let pp = spec.p1() * spec.p2();
    if pp <= 0.0 {
        return Err(AnalyticError::DegenerateBranch);
    }
    let tau_a = if var0 == 0.0 {
        f64::INFINITY
    } else {
        var0 / (lam2 * (delta2_0.norm_sqr() + var0 * var0))
    };
    let s = (lam2 * params.g * params.g * pp).powf(-1.0 / 3.0);
    Ok(PredictedScales {
        tau_a,
        s,
        tau_sigma: s,
        var_growth_rate: 4.0 * params.g * params.g * pp,
        cov_growth_rate: 8.0 * params.g.abs() * pp,
    })
}

/// Induced reduction time `(λ²g²p1p2)^{−1/3}` for a zero-variance start.
pub fn tau_sigma(lambda: f64, g: f64, p1: f64, p2: f64) -> f64 {
    (lambda * lambda * g * g * p1 * p2).powf(-1.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_operators, observables};
    use crate::oracle::{infidelity, rk4_linear, schrodinger_propagate};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn initial(spec: &BranchSpec, cutoff: FockCutoff) -> StateVector {
        let field = coherent_state(spec.alpha, cutoff).unwrap();
        correlated_state(spec.c1, &field, spec.c2, &field, cutoff).unwrap()
    }

    #[test]
    fn g_zero_identity_at_t0() {
        let cut = FockCutoff::new(30).unwrap();
        let spec = BranchSpec::new(c(0.6, 0.0), c(0.0, 0.8), c(1.0, 0.5)).unwrap();
        let s = solution_g_zero(&spec, 0.5, 0.5, 0.0, cut).unwrap();
        assert!(infidelity(&s, &initial(&spec, cut)).unwrap() < 1e-14);
    }

    #[test]
    fn g_zero_without_gap_only_rotates_field() {
        let cut = FockCutoff::new(30).unwrap();
        let spec = BranchSpec::with_probability(0.7, c(1.5, 0.0)).unwrap();
        let t = 1.3;
        let omega = 0.8;
        let s = solution_g_zero(&spec, omega, 0.0, t, cut).unwrap();
        let rotated = BranchSpec {
            alpha: spec.alpha * Complex64::from_polar(1.0, -omega * t),
            ..spec
        };
        assert!(infidelity(&s, &initial(&rotated, cut)).unwrap() < 1e-14);
        let params = ModelParams::new(omega, 0.0, 0.0, 0.0).unwrap();
        let obs = observables(&s, &build_operators(&params, cut));
        assert!((obs.sx_mean - 0.4).abs() < 1e-12);
    }

    #[test]
    fn g_zero_full_population_transfer() {
        let cut = FockCutoff::new(10).unwrap();
        let nu = 0.5;
        let t = std::f64::consts::PI / nu;
        let spec = BranchSpec::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        // c1(π/ν) = 0, c2(π/ν) = −i
        let expected = initial(
            &BranchSpec::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)).unwrap(),
            cut,
        );
        let s = solution_g_zero(&spec, 0.0, nu, t, cut).unwrap();
        assert!((s.inner(&expected) - c(1.0, 0.0)).norm() < 1e-12);

        let params = ModelParams::new(0.0, nu, 0.0, 0.0).unwrap();
        let ops = build_operators(&params, cut);
        let propagated = schrodinger_propagate(&ops.h, &initial(&spec, cut), t);
        assert!((propagated.inner(&expected) - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn g_zero_matches_matrix_exponential() {
        let cut = FockCutoff::new(30).unwrap();
        let params = ModelParams::new(0.5, 0.5, 0.0, 0.0).unwrap();
        let ops = build_operators(&params, cut);
        let spec = BranchSpec::new(c(0.6, 0.0), c(0.0, 0.8), c(1.0, -0.5)).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let exact = schrodinger_propagate(&ops.h, &initial(&spec, cut), t);
            let closed = solution_g_zero(&spec, 0.5, 0.5, t, cut).unwrap();
            assert!((closed.inner(&exact) - c(1.0, 0.0)).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn g_dominated_matches_matrix_exponential_including_phases() {
        let cut = FockCutoff::new(30).unwrap();
        let g = 1.0;
        let params = ModelParams::new(0.0, 0.0, g, 0.0).unwrap();
        let ops = build_operators(&params, cut);
        for spec in [
            BranchSpec::equal(c(1.0, 0.0)),
            BranchSpec::new(c(0.6, 0.0), c(0.0, 0.8), c(0.7, 0.3)).unwrap(),
        ] {
            for t in [0.25, 0.5, 1.0] {
                let exact = schrodinger_propagate(&ops.h, &initial(&spec, cut), t);
                let closed = solution_g_dominated(&spec, g, t, cut).unwrap();
                // the overlap itself, not just its modulus, pins the phases
                let overlap = closed.inner(&exact);
                assert!((overlap - c(1.0, 0.0)).norm() < 1e-8, "t = {t}: {overlap}");
                assert!(1.0 - overlap.norm_sqr() < 1e-8);
            }
        }
    }

    #[test]
    fn g_dominated_moments() {
        let spec = BranchSpec::equal(c(4.0, 0.0));
        let (g, t) = (4.0, 0.5);
        let cut = FockCutoff::auto(4.0, g, t);
        let s = solution_g_dominated(&spec, g, t, cut).unwrap();
        let ops = build_operators(&ModelParams::new(0.0, 0.0, g, 0.0).unwrap(), cut);
        let obs = observables(&s, &ops);
        let predicted = predicted_moments(g, t, 0.5, 0.5);
        assert!((obs.var_a - 4.0).abs() < 0.05 * 4.0, "{}", obs.var_a);
        assert!((obs.var_a - predicted.var_a).abs() < 0.05 * predicted.var_a);
        assert!(s.inner(&initial(&spec, cut)).norm() < 1.0);

        // cov ≈ −2gt for equal weights
        let (g, t) = (3.0, 0.5);
        let cut = FockCutoff::auto(4.0, g, t);
        let s = solution_g_dominated(&spec, g, t, cut).unwrap();
        let ops = build_operators(&ModelParams::new(0.0, 0.0, g, 0.0).unwrap(), cut);
        let obs = observables(&s, &ops);
        assert!(
            (obs.cov_current_field + 3.0).abs() < 0.05 * 3.0,
            "{}",
            obs.cov_current_field
        );
        assert!(obs.sx_mean.abs() < 1e-10);
        assert!((obs.a_mean - c(4.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn g_dominated_identity_at_t0() {
        let cut = FockCutoff::new(40).unwrap();
        let spec = BranchSpec::equal(c(2.0, 1.0));
        let s = solution_g_dominated(&spec, 4.0, 0.0, cut).unwrap();
        assert!((s.inner(&initial(&spec, cut)) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn decay_reference_values() {
        let cut = FockCutoff::new(30).unwrap();
        let sol = decay_solution(&[(c(1.0, 0.0), c(2.0, 0.0))], 0.2, 5.0, cut).unwrap();
        assert!((sol.centers[0] - c(1.637461506155964, 0.0)).norm() < 1e-12);
        assert!((sol.weights[0] - 0.517182272837).abs() < 1e-10);
        assert!((sol.weights[0] - 0.5172).abs() < 1e-4);

        let wide = FockCutoff::new(45).unwrap();
        let t0 = decay_solution(
            &[(c(0.5, 0.0), c(3.0, 0.0)), (c(0.5, 0.0), c(-3.0, 0.0))],
            0.2,
            0.0,
            wide,
        )
        .unwrap();
        assert_eq!(t0.weights, vec![1.0, 1.0]);
        assert_eq!(t0.centers, vec![c(3.0, 0.0), c(-3.0, 0.0)]);

        let late = decay_solution(&[(c(1.0, 0.0), c(2.0, 0.0))], 0.2, 500.0, cut).unwrap();
        assert!(late.centers[0].norm() < 1e-8);
        let vac = late.state(Spin::Up).unwrap();
        assert!((vac.amplitude(Spin::Up, 0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_rejects_overlapping_components() {
        let cut = FockCutoff::new(30).unwrap();
        let err = decay_solution(
            &[(c(1.0, 0.0), c(1.0, 0.0)), (c(1.0, 0.0), c(-1.0, 0.0))],
            0.2,
            1.0,
            cut,
        );
        assert!(matches!(err, Err(AnalyticError::InvalidParameter(_))));
    }

    #[test]
    fn decay_matches_rk4_integration() {
        let cut = FockCutoff::new(30).unwrap();
        let lambda = 0.2;
        let ops = build_operators(&ModelParams::new(0.0, 0.0, 0.0, lambda).unwrap(), cut);
        let comps = [(c(1.0, 0.0), c(2.0, 0.0))];
        let start = decay_solution(&comps, lambda, 0.0, cut).unwrap();
        let start_state = start.state(Spin::Up).unwrap();
        let t = 5.0;
        let integrated = rk4_linear(
            &ops.number,
            c(-lambda * lambda, 0.0),
            start_state.amplitudes(),
            t,
            2000,
        );
        let closed = decay_solution(&comps, lambda, t, cut).unwrap();
        let closed_state = closed.state(Spin::Up).unwrap();
        // unnormalized amplitudes agree, not just the ray
        let closed_raw = compose([c(1.0, 0.0), c(0.0, 0.0)], &closed.field, cut).unwrap();
        let norm = closed.field.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (a, b) in integrated.iter().zip(closed_raw.amplitudes()) {
            assert!((a - b * norm).norm() < 1e-9);
        }
        let integrated_state = StateVector::new(cut, integrated).unwrap();
        assert!(infidelity(&integrated_state, &closed_state).unwrap() < 1e-8);
    }

    #[test]
    fn decay_satisfies_its_ode() {
        let cut = FockCutoff::new(40).unwrap();
        let lambda: f64 = 0.3;
        let comps = [(c(0.6, 0.0), c(2.5, 0.0)), (c(0.0, 0.8), c(-2.0, 1.0))];
        let t = 2.0;
        let h = 1e-4;
        let at = |t| decay_solution(&comps, lambda, t, cut).unwrap().field;
        let (fp, fm, f0) = (at(t + h), at(t - h), at(t));
        for (n, ((p, m), z)) in fp.iter().zip(&fm).zip(&f0).enumerate() {
            let derivative = (p - m) / (2.0 * h);
            let rhs = -lambda * lambda * n as f64 * z;
            assert!((derivative - rhs).norm() < 1e-6, "n = {n}");
        }
    }

    #[test]
    fn moments_reference_values() {
        let m = predicted_moments(4.0, 0.5, 0.5, 0.5);
        assert_eq!(m.var_a, 4.0);
        assert_eq!(m.cov, -4.0);
        assert_eq!(
            predicted_moments(4.0, 0.5, 0.0, 1.0),
            PredictedMoments {
                var_a: 0.0,
                cov: -0.0
            }
        );
        assert_eq!(predicted_moments(4.0, 0.5, 1.0, 0.0).var_a, 0.0);
    }

    #[test]
    fn scales_reference_values() {
        let params = ModelParams::new(0.0, 0.0, 3.0, 0.2).unwrap();
        let spec = BranchSpec::equal(c(4.0, 0.0));
        let v = 2.5;
        let s = predicted_scales(&params, &spec, v, c(0.0, v)).unwrap();
        assert!((s.tau_a - 1.0 / (2.0 * 0.04 * v)).abs() < 1e-12);
        assert!((s.tau_sigma - 0.09f64.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!((s.tau_sigma - 2.231).abs() < 1e-3);
        let coherent = predicted_scales(&params, &spec, 0.0, c(0.0, 0.0)).unwrap();
        assert!(coherent.tau_a.is_infinite());
        assert!(coherent.var_growth_rate > 0.0 && coherent.cov_growth_rate > 0.0);

        let single = BranchSpec::new(c(1.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)).unwrap();
        assert_eq!(
            predicted_scales(&params, &single, 0.0, c(0.0, 0.0)),
            Err(AnalyticError::DegenerateBranch)
        );
        let frozen = ModelParams::new(0.0, 0.0, 3.0, 0.0).unwrap();
        assert!(predicted_scales(&frozen, &spec, 0.0, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn branch_validation() {
        assert!(BranchSpec::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)).is_err());
        let s = BranchSpec::with_probability(0.7, c(4.0, 0.0)).unwrap();
        assert!((s.p1() - 0.7).abs() < 1e-15);
        assert_eq!(s.swapped().c1, s.c2);
    }

    proptest! {
        #[test]
        fn moment_symmetries(g in -10.0f64..10.0, t in 0.0f64..3.0, p1 in 0.0f64..1.0) {
            let p2 = 1.0 - p1;
            let m = predicted_moments(g, t, p1, p2);
            prop_assert_eq!(m.var_a, predicted_moments(g, t, p2, p1).var_a);
            prop_assert_eq!(m.var_a, predicted_moments(-g, t, p1, p2).var_a);
            prop_assert_eq!(m.cov, -predicted_moments(-g, t, p1, p2).cov);
        }

        #[test]
        fn tau_sigma_monotone(g in 0.1f64..10.0, lambda in 0.01f64..1.0, p1 in 0.01f64..0.49) {
            let base = tau_sigma(lambda, g, p1, 1.0 - p1);
            prop_assert!(tau_sigma(lambda, g * 1.1, p1, 1.0 - p1) < base);
            prop_assert!(tau_sigma(lambda * 1.1, g, p1, 1.0 - p1) < base);
            // p1·p2 grows towards p1 = ½
            let p1b = (p1 + 0.01).min(0.5);
            prop_assert!(tau_sigma(lambda, g, p1b, 1.0 - p1b) < base);
        }
    }
}
