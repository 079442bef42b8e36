//! Independent reference propagators used to check the closed-form
//! solutions and the stochastic integrator.
//!
//! Everything here works on dense matrices and shares no code with the
//! sparse windowed propagator in [`crate::sde`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::hilbert::{HilbertError, Operator, StateVector};

pub fn dense(op: &Operator) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(op.dim(), op.dim(), &op.to_dense())
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    // max column sum
    let norm = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / Complex64::new(2f64.powi(squarings), 0.0);
    let mut result = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `exp(−iHt) ψ`.
pub fn schrodinger_propagate(h: &Operator, state: &StateVector, t: f64) -> StateVector {
    let gen = dense(h) * Complex64::new(0.0, -t);
    let u = expm(&gen);
    let psi = DVector::from_column_slice(state.amplitudes());
    let out = u * psi;
    StateVector::from_raw(state.cutoff(), out.as_slice().to_vec()).expect("propagator preserves dimension")
}

/// Classical RK4 for the linear ODE `dψ/dt = coeff · op · ψ`; returns the
/// unnormalized solution.
pub fn rk4_linear(
    op: &Operator,
    coeff: Complex64,
    psi0: &[Complex64],
    t: f64,
    steps: usize,
) -> Vec<Complex64> {
    let h = t / steps as f64;
    let f = |v: &[Complex64]| -> Vec<Complex64> { op.mul_vec(v).into_iter().map(|z| z * coeff).collect() };
    let axpy = |v: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
        v.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let mut psi = psi0.to_vec();
    for _ in 0..steps {
        let k1 = f(&psi);
        let k2 = f(&axpy(&psi, &k1, h / 2.0));
        let k3 = f(&axpy(&psi, &k2, h / 2.0));
        let k4 = f(&axpy(&psi, &k3, h));
        for i in 0..psi.len() {
            psi[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
    }
    psi
}

/// `1 − |⟨u|v⟩|²` for states that are normalized first.
pub fn infidelity(u: &StateVector, v: &StateVector) -> Result<f64, HilbertError> {
    let mut u = u.clone();
    let mut v = v.clone();
    u.renormalize()?;
    v.renormalize()?;
    Ok((1.0 - u.fidelity(&v)).max(0.0))
}
