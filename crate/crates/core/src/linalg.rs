//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Vectorization is column-stacking:
//! `vec(X)[c * d + r] = X[(r, c)]`, so `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(x: &CMatrix) -> CVector {
    let d = x.nrows();
    CVector::from_iterator(d * x.ncols(), x.iter().copied())
}

/// Inverse of [`vec`] for a square `d×d` matrix.
pub fn unvec(v: &CVector, d: usize) -> CMatrix {
    assert_eq!(v.len(), d * d, "vector length is not d²");
    CMatrix::from_iterator(d, d, v.iter().copied())
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m, &s| f64::max(m, s))
}

/// Maximum absolute column sum.
pub fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn hermiticity_residual(a: &CMatrix) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().copied().sum()
}

/// Eigenvalues (ascending) of the Hermitian part `(A + A†)/2`.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = (a + a.adjoint()) * c(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Applies a real function to a Hermitian matrix through its eigendecomposition.
pub fn hermitian_fn(a: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let h = (a + a.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let u = &eig.eigenvectors;
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&x| c(f(x), 0.0)),
    ));
    u * diag * u.adjoint()
}

/// Square root of a positive semidefinite matrix. Eigenvalues in `[-1e-12, 0)` are clamped to zero.
pub fn psd_sqrt(a: &CMatrix) -> CMatrix {
    hermitian_fn(a, |x| {
        debug_assert!(x >= -1e-9, "psd_sqrt on matrix with eigenvalue {x}");
        if x <= 0.0 {
            0.0
        } else {
            x.sqrt()
        }
    })
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(a: &CMatrix) -> Vec<C64> {
    a.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default()
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm of non-square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return identity(n);
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * c(0.5f64.powi(s), 0.0);
    let b = |i: usize| c(PADE13[i], 0.0);
    let id = identity(n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Σ_{ℓ=0}^{order} (A s)^ℓ / ℓ!
pub fn taylor_exp(a: &CMatrix, s: f64, order: usize) -> CMatrix {
    let n = a.nrows();
    let mut term = identity(n);
    let mut sum = term.clone();
    let as_ = a * c(s, 0.0);
    for l in 1..=order {
        term = (&as_ * &term) * c(1.0 / l as f64, 0.0);
        sum += &term;
    }
    sum
}

/// `out ← beta·out + alpha·a·b` for square matrices of equal size.
///
/// Plain loops over the column-major storage; for the tiny operators of few-qubit
/// models this beats the general BLAS-style kernel by a wide margin.
pub fn mul_acc(out: &mut CMatrix, alpha: C64, a: &CMatrix, b: &CMatrix, beta: C64) {
    let n = a.nrows();
    debug_assert!(a.is_square() && b.shape() == (n, n) && out.shape() == (n, n));
    if n > 16 {
        out.gemm(alpha, a, b, beta);
        return;
    }
    let (a, b) = (a.as_slice(), b.as_slice());
    let o = out.as_mut_slice();
    if n == 2 {
        let (a, b, o): (&[C64; 4], &[C64; 4], &mut [C64; 4]) =
            (a.try_into().unwrap(), b.try_into().unwrap(), o.try_into().unwrap());
        let p = [
            a[0] * b[0] + a[2] * b[1],
            a[1] * b[0] + a[3] * b[1],
            a[0] * b[2] + a[2] * b[3],
            a[1] * b[2] + a[3] * b[3],
        ];
        for (x, y) in o.iter_mut().zip(p) {
            *x = beta * *x + alpha * y;
        }
        return;
    }
    for x in o.iter_mut() {
        *x *= beta;
    }
    for j in 0..n {
        let col = &mut o[j * n..(j + 1) * n];
        for k in 0..n {
            let f = alpha * b[k + j * n];
            let acol = &a[k * n..(k + 1) * n];
            for i in 0..n {
                col[i] += f * acol[i];
            }
        }
    }
}

/// Pure state projector |ψ⟩⟨ψ|.
pub fn projector(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(mut self, other: CompensatedSum) -> CompensatedSum {
        self.add(other.sum);
        self.add(other.comp);
        self
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
