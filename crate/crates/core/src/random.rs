//! Seeded random operators, states and Lindbladians for tests and sweeps.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, c, CMatrix, CVector};
use crate::model::Lindbladian;

/// Complex Gaussian matrix with unit-variance entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * (0.5f64).sqrt()
    })
}

/// Random operator rescaled to the given spectral norm.
pub fn operator_with_norm<R: Rng + ?Sized>(rng: &mut R, d: usize, norm: f64) -> CMatrix {
    let a = gaussian_matrix(rng, d, d);
    let n = linalg::spectral_norm(&a);
    a * c(norm / n, 0.0)
}

pub fn hermitian_with_norm<R: Rng + ?Sized>(rng: &mut R, d: usize, norm: f64) -> CMatrix {
    let a = gaussian_matrix(rng, d, d);
    let h = (&a + a.adjoint()) * c(0.5, 0.0);
    let n = linalg::spectral_norm(&h);
    h * c(norm / n, 0.0)
}

pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CVector {
    let v = gaussian_matrix(rng, d, 1).column(0).into_owned();
    let n = v.norm();
    v / c(n, 0.0)
}

/// Full-rank density matrix `GG†/tr(GG†)`.
pub fn density_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let g = gaussian_matrix(rng, d, d);
    let rho = &g * g.adjoint();
    let tr = linalg::trace(&rho).re;
    let rho = rho / c(tr, 0.0);
    (&rho + rho.adjoint()) * c(0.5, 0.0)
}

/// Lindbladian on dimension `d` with `m` jumps, rescaled so that its be-norm equals `be_norm`.
///
/// Relative magnitudes of the Hamiltonian and the jumps are drawn at random.
pub fn lindbladian<R: Rng + ?Sized>(rng: &mut R, d: usize, m: usize, be_norm: f64) -> Lindbladian {
    let h_share: f64 = rng.random_range(0.2..0.8);
    let shares: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = shares.iter().sum();
    // α0 = h_share·β, ½Σα² = (1 − h_share)·β
    let jump_budget = if m == 0 { 0.0 } else { (1.0 - h_share) * be_norm };
    let alpha0 = be_norm - jump_budget;
    let h = hermitian_with_norm(rng, d, alpha0);
    let jumps = shares
        .iter()
        .map(|s| operator_with_norm(rng, d, (2.0 * jump_budget * s / total).sqrt()))
        .collect();
    Lindbladian::new(h, jumps).expect("random model is valid")
}
