//! Superoperators as `d²×d²` matrices acting on column-stacked density matrices.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        let n = dim * dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::arg("superoperator has non-finite entries"));
        }
        Ok(Self { dim, matrix })
    }

    pub(crate) fn from_matrix_unchecked(dim: usize, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), dim * dim);
        Self { dim, matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(dim, linalg::identity(dim * dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix_unchecked(dim, CMatrix::zeros(dim * dim, dim * dim))
    }

    /// `𝒦[A]: ρ ↦ AρA†`, which vectorizes to `Ā ⊗ A`.
    pub fn kraus(a: &CMatrix) -> Self {
        Self::from_matrix_unchecked(a.nrows(), linalg::kron(&a.conjugate(), a))
    }

    /// `ρ ↦ AρB`, which vectorizes to `Bᵀ ⊗ A`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self::from_matrix_unchecked(a.nrows(), linalg::kron(&b.transpose(), a))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        assert_eq!(rho.nrows(), self.dim, "state dimension mismatch");
        linalg::unvec(&(&self.matrix * linalg::vec(rho)), self.dim)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, other.dim);
        Self::from_matrix_unchecked(self.dim, &self.matrix * &other.matrix)
    }

    pub fn scale(&self, s: f64) -> Superoperator {
        Self::from_matrix_unchecked(self.dim, &self.matrix * c(s, 0.0))
    }

    pub fn add_scaled(&mut self, other: &Superoperator, s: f64) {
        assert_eq!(self.dim, other.dim);
        self.matrix.zip_apply(&other.matrix, |a, b| *a += b * s);
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn powi(&self, n: usize) -> Superoperator {
        let mut out = Superoperator::identity(self.dim);
        for _ in 0..n {
            out = self.compose(&out);
        }
        out
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator::from_matrix_unchecked(self.dim, &self.matrix + &rhs.matrix)
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator::from_matrix_unchecked(self.dim, &self.matrix - &rhs.matrix)
    }
}

impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        self.compose(rhs)
    }
}
