//! Composite two-state ⊗ truncated-Fock Hilbert space.
//!
//! Basis ordering is spin-major, photon-number minor: the amplitude of
//! `|s, n⟩` lives at index `s * (n_max + 1) + n`, where `s = 0` is the
//! `σz = +1` state and `s = 1` the `σz = −1` state.

use std::ops::Range;

use num_complex::Complex64;
use thiserror::Error;

/// Default bound on the Poisson tail mass a truncated coherent state may drop.
pub const DEFAULT_COHERENT_TOLERANCE: f64 = 1e-10;

/// Norm deviation above which [`observables`] logs a warning.
pub const NORM_DRIFT_WARNING: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("Fock cutoff n_max must be at least 1, got {0}")]
    InvalidCutoff(usize),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("coherent state with |alpha|^2 = {mean_photons} loses tail mass {tail:e} above n_max = {n_max} (tolerance {tolerance:e}); raise n_max")]
    CutoffTooSmall {
        mean_photons: f64,
        n_max: usize,
        tail: f64,
        tolerance: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state has zero or non-finite norm")]
    ZeroNorm,
}

/// Highest retained photon number of the field mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self, HilbertError> {
        if n_max < 1 {
            return Err(HilbertError::InvalidCutoff(n_max));
        }
        Ok(Self { n_max })
    }

    /// Cutoff covering the largest displaced coherent state a run can reach.
    ///
    /// Field centres drift by at most `g·t` away from `α`, so the run needs
    /// room for `β = |α| + |g|·t_max` plus six standard deviations of the
    /// Poisson photon-number distribution.
    pub fn auto(alpha_abs: f64, g: f64, t_max: f64) -> Self {
        let beta = alpha_abs.abs() + g.abs() * t_max.max(0.0);
        let n_max = (beta * beta + 6.0 * beta + 10.0).ceil() as usize;
        Self { n_max: n_max.max(1) }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn field_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn index(&self, spin: Spin, n: usize) -> usize {
        debug_assert!(n <= self.n_max);
        spin.index() * self.field_dim() + n
    }

    /// Index range of the photon numbers `levels` inside one spin block.
    pub fn block_rows(&self, spin: Spin, levels: Range<usize>) -> Range<usize> {
        let base = spin.index() * self.field_dim();
        base + levels.start..base + levels.end
    }
}

/// `σz` basis state of the two-state system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn sigma_z(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Sign of a current (`σx`) eigenvalue; also used for reduction outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurrentSign {
    Plus,
    Minus,
}

impl CurrentSign {
    pub fn value(self) -> f64 {
        match self {
            CurrentSign::Plus => 1.0,
            CurrentSign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> CurrentSign {
        if x >= 0.0 {
            CurrentSign::Plus
        } else {
            CurrentSign::Minus
        }
    }
}

/// Constants of the Hamiltonian and of the reduction coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Field mode frequency.
    pub omega: f64,
    /// Two-state energy gap.
    pub nu: f64,
    /// Current–field coupling.
    pub g: f64,
    /// Reduction coupling, units of time^(-1/2).
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(omega: f64, nu: f64, g: f64, lambda: f64) -> Result<Self, HilbertError> {
        let params = Self { omega, nu, g, lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), HilbertError> {
        for (name, v) in [
            ("omega", self.omega),
            ("nu", self.nu),
            ("g", self.g),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() {
                return Err(HilbertError::InvalidParams(format!("{name} = {v} is not finite")));
            }
        }
        if self.lambda < 0.0 {
            return Err(HilbertError::InvalidParams(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }
}

/// Square complex matrix over the composite basis, stored in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Complex64>,
}

impl Operator {
    /// Assembles an operator from `(row, col, value)` entries. Duplicate
    /// entries are summed; exact zeros are dropped.
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = Self {
            dim,
            row_ptr,
            cols,
            values,
        };
        op.prune();
        op
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != ZERO) {
            return;
        }
        let mut entries = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != ZERO {
                    entries.push((r, self.cols[k], self.values[k]));
                }
            }
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            row_ptr[r + 1] += 1;
            cols.push(c);
            values.push(v);
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        (self.row_ptr[row]..self.row_ptr[row + 1])
            .find(|&k| self.cols[k] == col)
            .map_or(ZERO, |k| self.values[k])
    }

    /// `y = self · x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_rows(0..self.dim, x, y);
    }

    /// Computes only the rows in `rows` of `self · x`, leaving the rest of `y`
    /// untouched.
    #[inline]
    pub fn apply_rows(&self, rows: Range<usize>, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for r in rows {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim];
        self.apply(x, &mut y);
        y
    }

    /// `⟨ψ|O|ψ⟩` without normalizing `ψ`.
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for r in 0..self.dim {
            let mut row = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * psi[self.cols[k]];
            }
            acc += psi[r].conj() * row;
        }
        acc
    }

    pub fn adjoint(&self) -> Operator {
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                entries.push((self.cols[k], r, self.values[k].conj()));
            }
        }
        Operator::from_triplets(self.dim, entries)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut dense = vec![ZERO; self.dim * self.dim];
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                dense[r * self.dim + self.cols[k]] += self.values[k];
            }
        }
        dense
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }
}

/// The model operators at one cutoff.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub cutoff: FockCutoff,
    pub a: Operator,
    pub a_dagger: Operator,
    /// `a†a`, kept separately because the reduction drift needs it every step.
    pub number: Operator,
    pub sigma_x: Operator,
    pub sigma_z: Operator,
    pub h: Operator,
}

/// Builds `a`, `a†`, `σx`, `σz` and `H = ω a†a + ½ν σz + g σx (a + a†)`.
pub fn build_operators(params: &ModelParams, cutoff: FockCutoff) -> OperatorSet {
    let dim = cutoff.dim();
    let n_max = cutoff.n_max();
    let c = |x: f64| Complex64::new(x, 0.0);

    let mut a = Vec::new();
    let mut number = Vec::new();
    let mut sigma_x = Vec::new();
    let mut sigma_z = Vec::new();
    let mut h = Vec::new();
    for spin in Spin::BOTH {
        for n in 0..=n_max {
            let row = cutoff.index(spin, n);
            if n >= 1 {
                a.push((cutoff.index(spin, n - 1), row, c((n as f64).sqrt())));
            }
            number.push((row, row, c(n as f64)));
            sigma_z.push((row, row, c(spin.sigma_z())));
            sigma_x.push((row, cutoff.index(spin.flipped(), n), c(1.0)));

            h.push((
                row,
                row,
                c(params.omega * n as f64 + 0.5 * params.nu * spin.sigma_z()),
            ));
            // g σx (a + a†): couples |s, n⟩ to |s̄, n ± 1⟩
            let other = spin.flipped();
            if n >= 1 {
                h.push((row, cutoff.index(other, n - 1), c(params.g * (n as f64).sqrt())));
            }
            if n < n_max {
                h.push((
                    row,
                    cutoff.index(other, n + 1),
                    c(params.g * ((n + 1) as f64).sqrt()),
                ));
            }
        }
    }
    let a = Operator::from_triplets(dim, a);
    let a_dagger = a.adjoint();
    OperatorSet {
        cutoff,
        a,
        a_dagger,
        number: Operator::from_triplets(dim, number),
        sigma_x: Operator::from_triplets(dim, sigma_x),
        sigma_z: Operator::from_triplets(dim, sigma_z),
        h: Operator::from_triplets(dim, h),
    }
}

/// Poisson tail mass `P(N > n_max)` for mean `mu`.
pub fn poisson_tail(mu: f64, n_max: usize) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let ln_mu = mu.ln();
    let mut n = n_max + 1;
    let mut ln_p = -mu + n as f64 * ln_mu - statrs::function::gamma::ln_gamma(n as f64 + 1.0);
    let mut tail = 0.0;
    loop {
        let term = ln_p.exp();
        tail += term;
        if (n as f64) > mu && term < tail * 1e-17 || ln_p < -745.0 && (n as f64) > mu {
            break;
        }
        n += 1;
        ln_p += ln_mu - (n as f64).ln();
    }
    tail
}

/// Truncated coherent state `|α⟩` on the field factor, renormalized.
pub fn coherent_state(alpha: Complex64, cutoff: FockCutoff) -> Result<Vec<Complex64>, HilbertError> {
    coherent_state_with_tolerance(alpha, cutoff, DEFAULT_COHERENT_TOLERANCE)
}

pub fn coherent_state_with_tolerance(
    alpha: Complex64,
    cutoff: FockCutoff,
    tolerance: f64,
) -> Result<Vec<Complex64>, HilbertError> {
    let mu = alpha.norm_sqr();
    let tail = poisson_tail(mu, cutoff.n_max());
    if tail > tolerance {
        return Err(HilbertError::CutoffTooSmall {
            mean_photons: mu,
            n_max: cutoff.n_max(),
            tail,
            tolerance,
        });
    }
    let mut field = vec![ZERO; cutoff.field_dim()];
    if mu == 0.0 {
        field[0] = Complex64::new(1.0, 0.0);
        return Ok(field);
    }
    // log-magnitudes keep large |α| from overflowing α^n / √n!
    let (r, phase) = alpha.to_polar();
    let ln_r = r.ln();
    let mut ln_mag = -0.5 * mu;
    for (n, amp) in field.iter_mut().enumerate() {
        if n > 0 {
            ln_mag += ln_r - 0.5 * (n as f64).ln();
        }
        *amp = Complex64::from_polar(ln_mag.exp(), phase * n as f64);
    }
    normalize(&mut field)?;
    Ok(field)
}

/// Normalized `σx` eigenvector `(1, sign)/√2` in the `σz` basis.
pub fn current_eigenstate(sign: CurrentSign) -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(h, 0.0), Complex64::new(h * sign.value(), 0.0)]
}

/// Rescales `v` to unit norm in place and returns the original norm.
pub fn normalize(v: &mut [Complex64]) -> Result<f64, HilbertError> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(HilbertError::ZeroNorm);
    }
    let inv = 1.0 / norm;
    v.iter_mut().for_each(|z| *z *= inv);
    Ok(norm)
}

/// `⟨u|v⟩`.
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// A normalized state of the composite system.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    cutoff: FockCutoff,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps `amps` after renormalizing them.
    pub fn new(cutoff: FockCutoff, mut amps: Vec<Complex64>) -> Result<Self, HilbertError> {
        if amps.len() != cutoff.dim() {
            return Err(HilbertError::DimensionMismatch {
                expected: cutoff.dim(),
                found: amps.len(),
            });
        }
        normalize(&mut amps)?;
        Ok(Self { cutoff, amps })
    }

    /// Wraps `amps` as-is. The caller is responsible for the norm.
    pub fn from_raw(cutoff: FockCutoff, amps: Vec<Complex64>) -> Result<Self, HilbertError> {
        if amps.len() != cutoff.dim() {
            return Err(HilbertError::DimensionMismatch {
                expected: cutoff.dim(),
                found: amps.len(),
            });
        }
        Ok(Self { cutoff, amps })
    }

    pub fn basis(cutoff: FockCutoff, spin: Spin, n: usize) -> Self {
        let mut amps = vec![ZERO; cutoff.dim()];
        amps[cutoff.index(spin, n)] = Complex64::new(1.0, 0.0);
        Self { cutoff, amps }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn amplitude(&self, spin: Spin, n: usize) -> Complex64 {
        self.amps[self.cutoff.index(spin, n)]
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn renormalize(&mut self) -> Result<f64, HilbertError> {
        normalize(&mut self.amps)
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        inner(&self.amps, &other.amps)
    }

    /// `|⟨self|other⟩|²` for normalized states.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Population in the top `levels` Fock levels, summed over both spins.
    pub fn top_population(&self, levels: usize) -> f64 {
        let n_max = self.cutoff.n_max();
        let lo = (n_max + 1).saturating_sub(levels);
        Spin::BOTH
            .iter()
            .flat_map(|&s| self.amps[self.cutoff.block_rows(s, lo..n_max + 1)].iter())
            .map(|z| z.norm_sqr())
            .sum()
    }
}

/// Tensor product `spin ⊗ field`, renormalized.
pub fn compose(
    spin: [Complex64; 2],
    field: &[Complex64],
    cutoff: FockCutoff,
) -> Result<StateVector, HilbertError> {
    if field.len() != cutoff.field_dim() {
        return Err(HilbertError::DimensionMismatch {
            expected: cutoff.field_dim(),
            found: field.len(),
        });
    }
    let mut amps = Vec::with_capacity(cutoff.dim());
    for s in spin {
        amps.extend(field.iter().map(|f| s * f));
    }
    StateVector::new(cutoff, amps)
}

/// Conditional expectations of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableSet {
    /// `⟨a⟩`
    pub a_mean: Complex64,
    /// `⟨a†a⟩ − |⟨a⟩|²`
    pub var_a: f64,
    /// `⟨a²⟩ − ⟨a⟩²`
    pub delta_a_sq: Complex64,
    /// `⟨σx⟩`
    pub sx_mean: f64,
    /// `Cov(σx, −i(a − a†))`
    pub cov_current_field: f64,
    /// `⟨H⟩`
    pub energy: f64,
    pub norm: f64,
}

pub fn observables(state: &StateVector, ops: &OperatorSet) -> ObservableSet {
    let psi = state.amplitudes();
    let norm_sq = state.norm_sqr();
    let norm = norm_sq.sqrt();
    if (norm - 1.0).abs() > NORM_DRIFT_WARNING {
        log::warn!("observables evaluated on a state with norm {norm}");
    }
    let inv = 1.0 / norm_sq;

    let a_psi = ops.a.mul_vec(psi);
    let sx_psi = ops.sigma_x.mul_vec(psi);
    let a_mean = inner(psi, &a_psi) * inv;
    let n_mean = a_psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * inv;
    // ⟨a²⟩ = ⟨a†ψ|aψ⟩
    let adag_psi = ops.a_dagger.mul_vec(psi);
    let a2_mean = inner(&adag_psi, &a_psi) * inv;
    let sx_mean = inner(psi, &sx_psi).re * inv;
    // ⟨σx a⟩; σx commutes with a
    let sx_a = inner(&sx_psi, &a_psi) * inv;
    let energy = ops.h.expectation(psi).re * inv;

    // −i⟨σx(a − a†)⟩ = 2 Im⟨σx a⟩ and i⟨a − a†⟩ = −2 Im⟨a⟩
    let cov_current_field = 2.0 * sx_a.im - 2.0 * sx_mean * a_mean.im;

    ObservableSet {
        a_mean,
        var_a: (n_mean - a_mean.norm_sqr()).max(0.0),
        delta_a_sq: a2_mean - a_mean * a_mean,
        sx_mean,
        cov_current_field,
        energy,
        norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(omega: f64, nu: f64, g: f64) -> ModelParams {
        ModelParams::new(omega, nu, g, 0.0).unwrap()
    }

    #[test]
    fn annihilation_lowers_photon_number() {
        let cut = FockCutoff::new(5).unwrap();
        let ops = build_operators(&params(1.0, 1.0, 1.0), cut);
        let psi = StateVector::basis(cut, Spin::Up, 1);
        let out = ops.a.mul_vec(psi.amplitudes());
        assert_eq!(out[cut.index(Spin::Up, 0)], c(1.0, 0.0));
        let rest: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert_eq!(rest, 1.0);
    }

    #[test]
    fn number_operator_eigenstate() {
        let cut = FockCutoff::new(5).unwrap();
        let ops = build_operators(&params(1.0, 1.0, 1.0), cut);
        let psi = StateVector::basis(cut, Spin::Down, 3);
        let mut tmp = vec![ZERO; cut.dim()];
        let mut out = vec![ZERO; cut.dim()];
        ops.a.apply(psi.amplitudes(), &mut tmp);
        ops.a_dagger.apply(&tmp, &mut out);
        for (k, z) in out.iter().enumerate() {
            let expected = if k == cut.index(Spin::Down, 3) { 3.0 } else { 0.0 };
            assert!((z - c(expected, 0.0)).norm() < 1e-14);
        }
        for (x, y) in ops.number.mul_vec(psi.amplitudes()).iter().zip(&out) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_hamiltonian_eigenvalue() {
        let cut = FockCutoff::new(5).unwrap();
        let ops = build_operators(&params(0.5, 0.5, 0.0), cut);
        let psi = StateVector::basis(cut, Spin::Up, 2);
        let out = ops.h.mul_vec(psi.amplitudes());
        assert!((out[cut.index(Spin::Up, 2)] - c(1.25, 0.0)).norm() < 1e-15);
        assert_eq!(ops.h.expectation(psi.amplitudes()), c(1.25, 0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian_and_adjoint_is_conjugate_transpose() {
        let cut = FockCutoff::new(8).unwrap();
        let ops = build_operators(&params(0.3, 0.7, 1.9), cut);
        assert_eq!(ops.h.adjoint(), ops.h);
        let a = ops.a.to_dense();
        let ad = ops.a_dagger.to_dense();
        let d = cut.dim();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(ad[i * d + j], a[j * d + i].conj());
            }
        }
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let cut = FockCutoff::new(10).unwrap();
        let ops = build_operators(&params(1.0, 1.0, 1.0), cut);
        let d = cut.dim();
        let a = ops.a.to_dense();
        let ad = ops.a_dagger.to_dense();
        let mul = |x: &[Complex64], y: &[Complex64], i: usize, j: usize| -> Complex64 {
            (0..d).map(|k| x[i * d + k] * y[k * d + j]).sum()
        };
        for spin in Spin::BOTH {
            for n in 0..cut.n_max() {
                for m in 0..cut.n_max() {
                    let (i, j) = (cut.index(spin, n), cut.index(spin, m));
                    let comm = mul(&a, &ad, i, j) - mul(&ad, &a, i, j);
                    let expected = if n == m { 1.0 } else { 0.0 };
                    assert!(
                        (comm - c(expected, 0.0)).norm() < 1e-12,
                        "[a,a†]({n},{m}) = {comm}"
                    );
                }
            }
        }
    }

    #[test]
    fn coherent_vacuum_and_mean_photons() {
        let cut = FockCutoff::new(40).unwrap();
        let vac = coherent_state(ZERO, cut).unwrap();
        assert_eq!(vac[0], c(1.0, 0.0));
        assert!(vac[1..].iter().all(|z| *z == ZERO));

        let psi = coherent_state(c(2.0, 0.0), cut).unwrap();
        let n_mean: f64 = psi.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((n_mean - 4.0).abs() < 1e-8, "{n_mean}");
    }

    #[test]
    fn coherent_overlap_of_opposite_amplitudes() {
        let cut = FockCutoff::new(40).unwrap();
        let p = coherent_state(c(1.0, 0.0), cut).unwrap();
        let m = coherent_state(c(-1.0, 0.0), cut).unwrap();
        assert!((inner(&p, &m).norm() - (-2.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn coherent_state_rejects_small_cutoff() {
        let cut = FockCutoff::new(10).unwrap();
        let err = coherent_state(c(4.0, 0.0), cut).unwrap_err();
        assert!(matches!(err, HilbertError::CutoffTooSmall { .. }));
    }

    #[test]
    fn large_coherent_amplitudes_do_not_overflow() {
        let beta = 40.0;
        let cut = FockCutoff::new(2100).unwrap();
        let psi = coherent_state(c(0.0, beta), cut).unwrap();
        let n_mean: f64 = psi.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((n_mean - beta * beta).abs() < 1e-6 * beta * beta);
    }

    #[test]
    fn auto_cutoff_formula() {
        // β = 4 + 4·3 = 16 → 256 + 96 + 10
        assert_eq!(FockCutoff::auto(4.0, 4.0, 3.0).n_max(), 362);
        assert_eq!(FockCutoff::auto(0.0, 0.0, 1.0).n_max(), 10);
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        let mu: f64 = 3.0;
        let mut pmf = (-mu).exp();
        let mut cdf = 0.0;
        for n in 0..=6 {
            if n > 0 {
                pmf *= mu / n as f64;
            }
            cdf += pmf;
        }
        assert!((poisson_tail(mu, 6) - (1.0 - cdf)).abs() < 1e-14);
        assert_eq!(poisson_tail(0.0, 3), 0.0);
    }

    #[test]
    fn current_eigenstates() {
        let cut = FockCutoff::new(3).unwrap();
        let ops = build_operators(&params(0.0, 0.0, 0.0), cut);
        let vac = coherent_state(ZERO, cut).unwrap();
        for (sign, expected) in [(CurrentSign::Plus, 1.0), (CurrentSign::Minus, -1.0)] {
            let psi = compose(current_eigenstate(sign), &vac, cut).unwrap();
            assert!((observables(&psi, &ops).sx_mean - expected).abs() < 1e-15);
        }
        let p = current_eigenstate(CurrentSign::Plus);
        let m = current_eigenstate(CurrentSign::Minus);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let even = [(p[0] + m[0]) * h, (p[1] + m[1]) * h];
        let psi = compose(even, &vac, cut).unwrap();
        assert!(observables(&psi, &ops).sx_mean.abs() < 1e-15);
    }

    #[test]
    fn compose_basis_and_dimension_check() {
        let cut = FockCutoff::new(4).unwrap();
        let vac = coherent_state(ZERO, cut).unwrap();
        let psi = compose([c(1.0, 0.0), ZERO], &vac, cut).unwrap();
        assert_eq!(psi, StateVector::basis(cut, Spin::Up, 0));
        let err = compose([c(1.0, 0.0), ZERO], &vac[..3], cut).unwrap_err();
        assert_eq!(
            err,
            HilbertError::DimensionMismatch {
                expected: 5,
                found: 3
            }
        );
    }

    #[test]
    fn product_eigenstate_observables() {
        let cut = FockCutoff::auto(4.0, 0.0, 0.0);
        let ops = build_operators(&params(0.5, 0.5, 4.0), cut);
        let field = coherent_state(c(4.0, 0.0), cut).unwrap();
        let psi = compose(current_eigenstate(CurrentSign::Plus), &field, cut).unwrap();
        let obs = observables(&psi, &ops);
        assert!((obs.a_mean - c(4.0, 0.0)).norm() < 1e-9);
        assert!(obs.var_a < 1e-9);
        assert!((obs.sx_mean - 1.0).abs() < 1e-12);
        assert!(obs.cov_current_field.abs() < 1e-8);
    }

    #[test]
    fn equal_superposition_observables() {
        let cut = FockCutoff::auto(4.0, 0.0, 0.0);
        let ops = build_operators(&params(0.5, 0.5, 4.0), cut);
        let field = coherent_state(c(4.0, 0.0), cut).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = compose([c(1.0, 0.0), ZERO], &field, cut).unwrap();
        let obs = observables(&psi, &ops);
        assert!(obs.sx_mean.abs() < 1e-15);
        assert!((obs.a_mean - c(4.0, 0.0)).norm() < 1e-9);
        // same state written in the current basis
        let p = current_eigenstate(CurrentSign::Plus);
        let m = current_eigenstate(CurrentSign::Minus);
        let psi2 = compose([(p[0] + m[0]) * h, (p[1] + m[1]) * h], &field, cut).unwrap();
        assert!((psi.fidelity(&psi2) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn coherent_overlap_law(ar in -4.0f64..4.0, ai in -4.0f64..4.0, br in -4.0f64..4.0, bi in -4.0f64..4.0) {
            let cut = FockCutoff::new(70).unwrap();
            let (alpha, beta) = (c(ar, ai), c(br, bi));
            prop_assume!(alpha.norm() <= 4.0 && beta.norm() <= 4.0);
            let u = coherent_state(alpha, cut).unwrap();
            let v = coherent_state(beta, cut).unwrap();
            let expected = (-(alpha - beta).norm_sqr() / 2.0).exp();
            prop_assert!((inner(&u, &v).norm() - expected).abs() < 1e-6);
        }

        #[test]
        fn variance_bounds_on_random_states(re in proptest::collection::vec(-1.0f64..1.0, 16), im in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let cut = FockCutoff::new(7).unwrap();
            let ops = build_operators(&params(0.4, 0.3, 1.1), cut);
            let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| c(r, i)).collect();
            prop_assume!(amps.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
            let psi = StateVector::new(cut, amps).unwrap();
            let obs = observables(&psi, &ops);
            prop_assert!(obs.var_a >= 0.0);
            prop_assert!(obs.delta_a_sq.norm() <= obs.var_a + 1e-12);
            prop_assert!(obs.sx_mean.abs() <= 1.0 + 1e-12);
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn product_states_have_no_variance_or_covariance(ar in -3.0f64..3.0, ai in -3.0f64..3.0, plus in any::<bool>()) {
            let cut = FockCutoff::new(60).unwrap();
            let ops = build_operators(&params(0.5, 0.5, 2.0), cut);
            let field = coherent_state(c(ar, ai), cut).unwrap();
            let sign = if plus { CurrentSign::Plus } else { CurrentSign::Minus };
            let psi = compose(current_eigenstate(sign), &field, cut).unwrap();
            let obs = observables(&psi, &ops);
            prop_assert!(obs.var_a < 1e-8);
            prop_assert!(obs.delta_a_sq.norm() < 1e-8);
            prop_assert!(obs.cov_current_field.abs() < 1e-8);
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }
}
