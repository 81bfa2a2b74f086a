//! The Lindbladian model, its drift/jump split and the exact evolution oracle.
//!
//! ```text
//! ℒ(ρ) = −i[H, ρ] + Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})
//!      = ℒ_D(ρ) + ℒ_J(ρ),   ℒ_D(ρ) = Jρ + ρJ†,   ℒ_J(ρ) = Σ_j L_j ρ L_j†
//! J    = −iH − ½ Σ_j L_j†L_j
//! ```
//!
//! Each operator carries a normalizing factor (`alpha0` for `H`, `alphas[j]` for
//! `L_j`) bounding its spectral norm; the be-norm `α₀ + ½Σα_j²` sets the time
//! scale of everything downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};
use crate::superop::Superoperator;

/// Absolute Hermiticity tolerance applied on ingest (scaled by the matrix magnitude when larger than one).
pub const HERMITICITY_TOL: f64 = 1e-12;
const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizingFactors {
    pub alpha0: f64,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lindbladian {
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
    alpha0: f64,
    alphas: Vec<f64>,
}

fn check_operator(name: &str, a: &CMatrix, dim: usize) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::model(format!("{name} is not square ({}x{})", a.nrows(), a.ncols())));
    }
    if a.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: a.nrows(),
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::model(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl Lindbladian {
    /// Builds a model with the tightest admissible normalizing factors (spectral norms).
    pub fn new(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self> {
        let h = Self::ingest_hamiltonian(hamiltonian)?;
        for (j, l) in jumps.iter().enumerate() {
            check_operator(&format!("jump operator {j}"), l, h.nrows())?;
        }
        let alpha0 = linalg::spectral_norm(&h);
        let alphas = jumps.iter().map(linalg::spectral_norm).collect();
        Ok(Self {
            hamiltonian: h,
            jumps,
            alpha0,
            alphas,
        })
    }

    /// Builds a model with caller-supplied normalizing factors, which must dominate the spectral norms.
    pub fn with_factors(
        hamiltonian: CMatrix,
        jumps: Vec<CMatrix>,
        factors: NormalizingFactors,
    ) -> Result<Self> {
        let mut model = Self::new(hamiltonian, jumps)?;
        let NormalizingFactors { alpha0, alphas } = factors;
        if alphas.len() != model.jumps.len() {
            return Err(Error::model(format!(
                "{} normalizing factors for {} jump operators",
                alphas.len(),
                model.jumps.len()
            )));
        }
        let admissible = |alpha: f64, norm: f64| {
            alpha.is_finite() && alpha >= 0.0 && norm <= alpha * (1.0 + NORM_SLACK) + NORM_SLACK
        };
        if !admissible(alpha0, model.alpha0) {
            return Err(Error::model(format!(
                "alpha0 = {alpha0} is below the Hamiltonian norm {}",
                model.alpha0
            )));
        }
        for (j, (&a, &n)) in alphas.iter().zip(&model.alphas).enumerate() {
            if !admissible(a, n) {
                return Err(Error::model(format!(
                    "alpha[{j}] = {a} is below the jump operator norm {n}"
                )));
            }
        }
        model.alpha0 = alpha0;
        model.alphas = alphas;
        Ok(model)
    }

    fn ingest_hamiltonian(h: CMatrix) -> Result<CMatrix> {
        check_operator("Hamiltonian", &h, h.nrows())?;
        if h.nrows() < 2 {
            return Err(Error::model("system dimension must be at least 2"));
        }
        let scale = linalg::max_abs(&h).max(1.0);
        let residual = linalg::hermiticity_residual(&h);
        if residual > HERMITICITY_TOL * scale {
            return Err(Error::model(format!(
                "Hamiltonian is not Hermitian (residual {residual:e})"
            )));
        }
        Ok((&h + h.adjoint()) * c(0.5, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn factors(&self) -> NormalizingFactors {
        NormalizingFactors {
            alpha0: self.alpha0,
            alphas: self.alphas.clone(),
        }
    }

    /// Σ_j α_j²
    pub fn jump_weight(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }

    /// `‖ℒ‖_be = α₀ + ½ Σ_j α_j²`
    pub fn be_norm(&self) -> f64 {
        be_norm(self.alpha0, &self.alphas)
    }

    /// `J = −iH − ½ Σ_j L_j†L_j`
    pub fn effective_generator(&self) -> CMatrix {
        effective_generator(&self.hamiltonian, &self.jumps)
    }

    /// Direct (non-vectorized) evaluation of `ℒ(ρ)`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        apply_lindbladian(&self.hamiltonian, &self.jumps, rho)
    }

    /// Vectorized Liouvillian `ℒ̂`.
    pub fn liouvillian_matrix(&self) -> Superoperator {
        liouvillian_matrix(&self.hamiltonian, &self.jumps)
    }

    /// Vectorized drift generator `ℒ̂_D: ρ ↦ Jρ + ρJ†`.
    pub fn drift_generator_matrix(&self) -> Superoperator {
        let j = self.effective_generator();
        let id = linalg::identity(self.dim());
        &Superoperator::sandwich(&j, &id) + &Superoperator::sandwich(&id, &j.adjoint())
    }

    /// `ℒ̂_J = Σ_j 𝒦[L_j]`
    pub fn jump_superoperator(&self) -> Superoperator {
        jump_superoperator(&self.jumps, self.dim())
    }

    /// `e^{ℒt}` by Padé scaling and squaring of the vectorized Liouvillian.
    pub fn exact_channel(&self, t: f64) -> Result<Superoperator> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::arg(format!("evolution time must be a finite nonnegative number, got {t}")));
        }
        let l = self.liouvillian_matrix();
        Ok(Superoperator::from_matrix_unchecked(
            self.dim(),
            linalg::expm(&(l.matrix() * c(t, 0.0))),
        ))
    }

    /// `e^{ℒ_D t} = 𝒦[e^{Jt}]`, built from the `d×d` exponential.
    pub fn drift_semigroup(&self, t: f64) -> Result<Superoperator> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::arg(format!("evolution time must be a finite nonnegative number, got {t}")));
        }
        Ok(Superoperator::kraus(&self.drift_propagator(t)))
    }

    /// `e^{Jt}`
    pub fn drift_propagator(&self, t: f64) -> CMatrix {
        linalg::expm(&(self.effective_generator() * c(t, 0.0)))
    }
}

pub fn be_norm(alpha0: f64, alphas: &[f64]) -> f64 {
    alpha0 + 0.5 * alphas.iter().map(|a| a * a).sum::<f64>()
}

pub fn effective_generator(h: &CMatrix, jumps: &[CMatrix]) -> CMatrix {
    let mut j = h * c(0.0, -1.0);
    for l in jumps {
        j -= (l.adjoint() * l) * c(0.5, 0.0);
    }
    j
}

pub fn apply_lindbladian(h: &CMatrix, jumps: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let mut out = (h * rho - rho * h) * (-I);
    for l in jumps {
        let ldl = l.adjoint() * l;
        out += l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * c(0.5, 0.0);
    }
    out
}

pub fn liouvillian_matrix(h: &CMatrix, jumps: &[CMatrix]) -> Superoperator {
    let d = h.nrows();
    let id = linalg::identity(d);
    let mut m = (linalg::kron(&id, h) - linalg::kron(&h.transpose(), &id)) * (-I);
    for l in jumps {
        let ldl = l.adjoint() * l;
        m += linalg::kron(&l.conjugate(), l)
            - (linalg::kron(&id, &ldl) + linalg::kron(&ldl.transpose(), &id)) * c(0.5, 0.0);
    }
    Superoperator::from_matrix_unchecked(d, m)
}

pub fn jump_superoperator(jumps: &[CMatrix], dim: usize) -> Superoperator {
    let mut acc = Superoperator::zeros(dim);
    for l in jumps {
        acc.add_scaled(&Superoperator::kraus(l), 1.0);
    }
    acc
}
