//! Choi representations, trace norms and diamond-norm sandwich bounds.
//!
//! The Choi matrix is `C = Σ_{ij} Φ(|i⟩⟨j|) ⊗ |i⟩⟨j|` (output factor first). With
//! column-stacking vectorization this is the index reshuffle
//! `C[(a,i),(b,j)] = S[(b,a),(j,i)]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::superop::Superoperator;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    dim: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: matrix.nrows(),
            });
        }
        Ok(Self { dim, matrix })
    }

    /// Inverse reshuffle back to the vectorized superoperator.
    pub fn to_superoperator(&self) -> Superoperator {
        let d = self.dim;
        let s = CMatrix::from_fn(d * d, d * d, |r, col| {
            let (b, a) = (r / d, r % d);
            let (j, i) = (col / d, col % d);
            self.matrix[(a * d + i, b * d + j)]
        });
        Superoperator::from_matrix_unchecked(d, s)
    }

    /// `Tr_out C`, which is the identity for trace-preserving maps.
    pub fn partial_trace_output(&self) -> CMatrix {
        let d = self.dim;
        CMatrix::from_fn(d, d, |i, j| (0..d).map(|a| self.matrix[(a * d + i, a * d + j)]).sum())
    }
}

fn reshuffle(m: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_fn(d * d, d * d, |r, col| {
        let (a, i) = (r / d, r % d);
        let (b, j) = (col / d, col % d);
        m[(b * d + a, j * d + i)]
    })
}

pub fn choi(s: &Superoperator) -> ChoiMatrix {
    ChoiMatrix {
        dim: s.dim(),
        matrix: reshuffle(s.matrix(), s.dim()),
    }
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiamondBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `‖C(S1−S2)‖₁/d ≤ ‖S1 − S2‖⋄ ≤ ‖C(S1−S2)‖₁`.
pub fn diamond_sandwich(s1: &Superoperator, s2: &Superoperator) -> Result<DiamondBounds> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            expected: s1.dim(),
            found: s2.dim(),
        });
    }
    let upper = trace_norm(choi(&(s1 - s2)).matrix());
    Ok(DiamondBounds {
        lower: upper / s1.dim() as f64,
        upper,
    })
}

/// Normalized Choi trace distance, the lower end of [`diamond_sandwich`].
pub fn choi_distance(s1: &Superoperator, s2: &Superoperator) -> f64 {
    diamond_sandwich(s1, s2).map(|b| b.lower).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CptpReport {
    pub min_choi_eigenvalue: f64,
    pub trace_preservation_residual: f64,
    pub hermiticity_residual: f64,
}

pub fn cptp_report(s: &Superoperator) -> CptpReport {
    let c = choi(s);
    let d = s.dim();
    let tp = c.partial_trace_output() - linalg::identity(d);
    CptpReport {
        min_choi_eigenvalue: linalg::hermitian_eigenvalues(c.matrix())[0],
        trace_preservation_residual: linalg::spectral_norm(&tp),
        hermiticity_residual: linalg::hermiticity_residual(c.matrix()),
    }
}
