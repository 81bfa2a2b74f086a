//! Dense-matrix realizations of block encodings, linear combinations of them,
//! the LCU implementation of a completely positive map, oblivious amplitude
//! amplification and success-probability dilution.
//!
//! Registers are tensor factors of dense vectors. Ancilla registers are always
//! the most significant factors, so `(⟨0^b| ⊗ I) U (|0^b⟩ ⊗ I)` is the top-left
//! `d×d` block of `U`.

use serde::Serialize;

use crate::duhamel::CPMapApprox;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, ONE, ZERO};

pub const UNITARITY_TOL: f64 = 1e-11;
/// How far `‖P₀Wψ̂‖` may sit from ½ before OAA refuses to run.
pub const OAA_PREMISE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEncoding {
    unitary: CMatrix,
    alpha: f64,
    ancilla_qubits: usize,
    target: CMatrix,
    epsilon: f64,
}

pub fn unitarity_residual(u: &CMatrix) -> f64 {
    linalg::spectral_norm(&(u.adjoint() * u - linalg::identity(u.nrows())))
}

fn qubits_for(n: usize) -> usize {
    let mut b = 0;
    while (1usize << b) < n {
        b += 1;
    }
    b
}

impl BlockEncoding {
    pub fn new(unitary: CMatrix, alpha: f64, ancilla_qubits: usize, target: CMatrix, epsilon: f64) -> Result<Self> {
        let d = target.nrows();
        if target.ncols() != d || unitary.nrows() != d << ancilla_qubits || !unitary.is_square() {
            return Err(Error::DimensionMismatch {
                expected: d << ancilla_qubits,
                found: unitary.nrows(),
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::arg(format!("normalizer must be positive, got {alpha}")));
        }
        let r = unitarity_residual(&unitary);
        if r > UNITARITY_TOL {
            return Err(Error::arg(format!("encoding matrix is not unitary (residual {r:e})")));
        }
        let enc = Self {
            unitary,
            alpha,
            ancilla_qubits,
            target,
            epsilon,
        };
        let err = enc.extraction_error();
        if err > epsilon + 1e-12 * alpha.max(1.0) {
            return Err(Error::arg(format!(
                "encoding misses its target by {err:e}, more than the declared {epsilon:e}"
            )));
        }
        Ok(enc)
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.ancilla_qubits
    }

    pub fn target(&self) -> &CMatrix {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn system_dim(&self) -> usize {
        self.target.nrows()
    }

    /// `α · (⟨0^b| ⊗ I) U (|0^b⟩ ⊗ I)`
    pub fn encoded(&self) -> CMatrix {
        let d = self.system_dim();
        self.unitary.view((0, 0), (d, d)).into_owned() * c(self.alpha, 0.0)
    }

    pub fn extraction_error(&self) -> f64 {
        linalg::spectral_norm(&(&self.target - self.encoded()))
    }

    /// Same unitary, reinterpreted as an `epsilon`-accurate encoding of `target`.
    pub fn with_target(self, target: CMatrix, epsilon: f64) -> Result<Self> {
        Self::new(self.unitary, self.alpha, self.ancilla_qubits, target, epsilon)
    }
}

/// One-ancilla exact encoding by unitary completion
/// `[[B, √(I−BB†)], [√(I−B†B), −B†]]` with `B = A/α`.
pub fn dilate(a: &CMatrix, alpha: f64) -> Result<BlockEncoding> {
    if !a.is_square() {
        return Err(Error::arg("only square operators can be block-encoded"));
    }
    if !(alpha > 0.0) {
        return Err(Error::arg(format!("normalizer must be positive, got {alpha}")));
    }
    let norm = linalg::spectral_norm(a);
    if norm > alpha * (1.0 + 1e-12) {
        return Err(Error::arg(format!("operator norm {norm} exceeds normalizer {alpha}")));
    }
    let d = a.nrows();
    let b = a / c(alpha, 0.0);
    // With B = UΣV†: √(I−BB†) = U√(I−Σ²)U† and √(I−B†B) = V√(I−Σ²)V†; sharing one
    // SVD keeps the completion unitary even when Σ touches 1.
    let svd = b.clone().svd(true, true);
    let (su, sv_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V†"));
    let comp = CMatrix::from_diagonal(&svd.singular_values.map(|x| {
        let x = x.min(1.0);
        c(((1.0 - x) * (1.0 + x)).sqrt(), 0.0)
    }));
    let top = &su * &comp * su.adjoint();
    let bottom = sv_t.adjoint() * &comp * &sv_t;
    let mut u = CMatrix::zeros(2 * d, 2 * d);
    u.view_mut((0, 0), (d, d)).copy_from(&b);
    u.view_mut((0, d), (d, d)).copy_from(&top);
    u.view_mut((d, 0), (d, d)).copy_from(&bottom);
    u.view_mut((d, d), (d, d)).copy_from(&(-b.adjoint()));
    let mut enc = BlockEncoding {
        unitary: u,
        alpha,
        ancilla_qubits: 1,
        target: a.clone(),
        epsilon: 0.0,
    };
    enc.epsilon = enc.extraction_error();
    let r = unitarity_residual(&enc.unitary);
    if r > UNITARITY_TOL {
        return Err(Error::arg(format!("unitary completion failed (residual {r:e})")));
    }
    Ok(enc)
}

/// Real unitary whose first column is the unit vector `amp` (Householder reflection).
pub fn state_preparation(amp: &[f64]) -> CMatrix {
    let n = amp.len();
    let mut v = CVector::from_iterator(n, amp.iter().map(|&a| c(-a, 0.0)));
    v[0] += ONE;
    let vv = v.norm_squared();
    if vv < 1e-30 {
        return linalg::identity(n);
    }
    linalg::identity(n) - (&v * v.adjoint()) * c(2.0 / vv, 0.0)
}

/// `Σ_j |j⟩⟨j| ⊗ U_j`, padded with identities up to `2^c` blocks.
fn select(unitaries: &[&CMatrix], blocks: usize) -> CMatrix {
    let n = unitaries[0].nrows();
    let mut s = CMatrix::zeros(blocks * n, blocks * n);
    for j in 0..blocks {
        let block = unitaries.get(j).map(|u| (*u).clone()).unwrap_or_else(|| linalg::identity(n));
        s.view_mut((j * n, j * n), (n, n)).copy_from(&block);
    }
    s
}

/// Encoding of `Σ_j y_j A_j` with normalizer `Σ_j y_j α_j`, built as `(B† ⊗ I) select (B ⊗ I)`.
pub fn lcu_sum(encodings: &[BlockEncoding], y: &[f64]) -> Result<BlockEncoding> {
    let first = encodings.first().ok_or_else(|| Error::arg("need at least one encoding"))?;
    if y.len() != encodings.len() {
        return Err(Error::DimensionMismatch {
            expected: encodings.len(),
            found: y.len(),
        });
    }
    if y.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::arg("coefficients must be positive"));
    }
    for e in encodings {
        if e.ancilla_qubits != first.ancilla_qubits || e.system_dim() != first.system_dim() {
            return Err(Error::arg("encodings must share ancilla count and system dimension"));
        }
    }
    let s: f64 = encodings.iter().zip(y).map(|(e, &yj)| yj * e.alpha).sum();
    let cq = qubits_for(encodings.len());
    let blocks = 1usize << cq;
    let mut amp: Vec<f64> = encodings.iter().zip(y).map(|(e, &yj)| (yj * e.alpha / s).sqrt()).collect();
    amp.resize(blocks, 0.0);
    let inner = first.unitary.nrows();
    let prep = linalg::kron(&state_preparation(&amp), &linalg::identity(inner));
    let sel = select(&encodings.iter().map(|e| &e.unitary).collect::<Vec<_>>(), blocks);
    let w = prep.adjoint() * sel * &prep;
    let target = encodings
        .iter()
        .zip(y)
        .fold(CMatrix::zeros(first.system_dim(), first.system_dim()), |acc, (e, &yj)| {
            acc + &e.target * c(yj, 0.0)
        });
    // Each encoding's error is absolute in its target, so errors add with weight y_j.
    let epsilon: f64 = encodings.iter().zip(y).map(|(e, &yj)| yj * e.epsilon).sum();
    BlockEncoding::new(w, s, cq + first.ancilla_qubits, target, epsilon)
}

/// Normalized amplitudes `s_j/√(Σ s²)` over the Kraus index set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuState {
    amplitudes: Vec<f64>,
}

impl MuState {
    pub fn from_normalizers(s: &[f64]) -> Result<Self> {
        if s.is_empty() || s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::arg("normalizers must be finite and nonnegative"));
        }
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::arg("normalizers are all zero"));
        }
        Ok(Self {
            amplitudes: s.iter().map(|v| v / norm).collect(),
        })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Per-register factors of the unnormalized amplitudes
/// `f(k) · Π_i g(ℓ_i) · Π_i h_i(j_i)`:
/// a unary order register, one jump register per level and one node register per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuRegisters {
    /// `f(k) = t^{−k(k−1)/4}` for `k = 0..=K`
    pub order: Vec<f64>,
    /// `g(ℓ) = α_ℓ`
    pub jump: Vec<f64>,
    /// `node[i−1][j] = h_i(j) = √(w_j ŝ_j^{i−1})` for levels `i = 1..=K`
    pub node: Vec<Vec<f64>>,
}

impl MuRegisters {
    pub fn amplitude(&self, k: usize, jumps: &[usize], nodes: &[usize]) -> f64 {
        let g: f64 = jumps.iter().map(|&l| self.jump[l]).product();
        let h: f64 = nodes.iter().enumerate().map(|(i, &j)| self.node[i][j]).product();
        self.order[k] * g * h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuCoefficients {
    pub state: MuState,
    pub registers: MuRegisters,
    /// `e^{βt}`, shared by every normalizer and dropped from the state.
    pub common_factor: f64,
}

/// The coefficient state for `cp` together with its register factorization.
pub fn mu_coefficients(cp: &CPMapApprox) -> MuCoefficients {
    let normalizers: Vec<f64> = (0..cp.len()).map(|i| cp.normalizer(i)).collect();
    let (k_order, _, q) = cp.orders();
    let t = cp.time();
    let order = (0..=k_order)
        .map(|k| t.powf(-((k * k.saturating_sub(1)) as f64) / 4.0))
        .collect();
    let node = match cp.rule() {
        Some(rule) => (1..=k_order)
            .map(|i| {
                (0..q)
                    .map(|j| (rule.weights[j] * rule.nodes[j].powi(i as i32 - 1)).sqrt())
                    .collect()
            })
            .collect(),
        None => vec![],
    };
    MuCoefficients {
        state: MuState::from_normalizers(&normalizers).expect("normalizers are positive"),
        registers: MuRegisters {
            order,
            jump: cp.model().alphas().to_vec(),
            node,
        },
        common_factor: (cp.model().be_norm() * t).exp(),
    }
}

/// Dense matrices of the LCU-for-channels construction.
///
/// Register order, most significant first: index (`2^c`), shared encoding ancilla (`2^b`), system (`d`).
#[derive(Debug, Clone)]
pub struct LcuChannel {
    pub index_qubits: usize,
    pub ancilla_qubits: usize,
    pub system_dim: usize,
    /// `select · (Prep_μ ⊗ I ⊗ I)`
    pub unitary: CMatrix,
    mu: Vec<f64>,
    targets: Vec<CMatrix>,
    total_normalizer_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LcuOutcome {
    /// `(⟨0^b|_anc ⊗ I) select |μ⟩|0^b⟩|ψ⟩` over (index, system).
    #[serde(skip)]
    pub projected: CVector,
    /// `(Σs²)^{−1/2} Σ_j |j⟩ A_j|ψ⟩` over (index, system).
    #[serde(skip)]
    pub reference: CVector,
    pub residual: f64,
    /// `m ε_max / √(Σ s²)`
    pub residual_bound: f64,
    pub success_amplitude: f64,
}

impl LcuOutcome {
    /// `Tr_index |proj⟩⟨proj|`, the unnormalized system state on success.
    pub fn reduced_state(&self, system_dim: usize) -> CMatrix {
        let blocks = self.projected.len() / system_dim;
        let mut rho = CMatrix::zeros(system_dim, system_dim);
        for j in 0..blocks {
            let v = self.projected.rows(j * system_dim, system_dim).into_owned();
            rho += &v * v.adjoint();
        }
        rho
    }
}

impl LcuChannel {
    /// Builds the construction from encodings of the Kraus operators; `mu` must be
    /// proportional to their normalizers.
    pub fn new(encodings: &[BlockEncoding], mu: &MuState) -> Result<Self> {
        let first = encodings.first().ok_or_else(|| Error::arg("need at least one encoding"))?;
        if mu.len() != encodings.len() {
            return Err(Error::DimensionMismatch {
                expected: encodings.len(),
                found: mu.len(),
            });
        }
        for e in encodings {
            if e.ancilla_qubits != first.ancilla_qubits || e.system_dim() != first.system_dim() {
                return Err(Error::arg("encodings must share ancilla count and system dimension"));
            }
        }
        let s2: f64 = encodings.iter().map(|e| e.alpha * e.alpha).sum();
        for (e, &a) in encodings.iter().zip(mu.amplitudes()) {
            let expected = e.alpha / s2.sqrt();
            if (a - expected).abs() > 1e-12 {
                return Err(Error::arg(format!(
                    "coefficient amplitude {a} does not match normalizer ratio {expected}"
                )));
            }
        }
        let cq = qubits_for(encodings.len());
        let blocks = 1usize << cq;
        let mut amp = mu.amplitudes().to_vec();
        amp.resize(blocks, 0.0);
        let inner = first.unitary.nrows();
        let prep = linalg::kron(&state_preparation(&amp), &linalg::identity(inner));
        let sel = select(&encodings.iter().map(|e| &e.unitary).collect::<Vec<_>>(), blocks);
        Ok(Self {
            index_qubits: cq,
            ancilla_qubits: first.ancilla_qubits,
            system_dim: first.system_dim(),
            unitary: sel * prep,
            mu: amp,
            targets: encodings.iter().map(|e| e.target.clone()).collect(),
            total_normalizer_sq: s2,
        })
    }

    fn ancilla_dim(&self) -> usize {
        1 << self.ancilla_qubits
    }

    /// `|0⟩_index |0^b⟩ |ψ⟩`
    pub fn embed(&self, psi: &CVector) -> CVector {
        let mut v = CVector::zeros(self.unitary.nrows());
        v.rows_mut(0, self.system_dim).copy_from(psi);
        v
    }

    /// Projector onto ancilla `|0^b⟩` with index and system free.
    pub fn good_projector(&self) -> CMatrix {
        let mut anc = CMatrix::zeros(self.ancilla_dim(), self.ancilla_dim());
        anc[(0, 0)] = ONE;
        linalg::kron(
            &linalg::kron(&linalg::identity(1 << self.index_qubits), &anc),
            &linalg::identity(self.system_dim),
        )
    }

    /// Projector onto index `|0⟩` and ancilla `|0^b⟩` with the system free.
    pub fn input_projector(&self) -> CMatrix {
        let n = self.unitary.nrows();
        CMatrix::from_fn(n, n, |r, col| if r == col && r < self.system_dim { ONE } else { ZERO })
    }

    pub fn apply(&self, psi: &CVector, injected_epsilon: f64) -> Result<LcuOutcome> {
        if psi.len() != self.system_dim {
            return Err(Error::DimensionMismatch {
                expected: self.system_dim,
                found: psi.len(),
            });
        }
        let d = self.system_dim;
        let inner = d * self.ancilla_dim();
        let blocks = 1usize << self.index_qubits;
        let out = &self.unitary * self.embed(psi);
        let mut projected = CVector::zeros(blocks * d);
        for j in 0..blocks {
            projected.rows_mut(j * d, d).copy_from(&out.rows(j * inner, d));
        }
        let mut reference = CVector::zeros(blocks * d);
        let scale = c(1.0 / self.total_normalizer_sq.sqrt(), 0.0);
        for (j, a) in self.targets.iter().enumerate() {
            reference.rows_mut(j * d, d).copy_from(&(a * psi * scale));
        }
        Ok(LcuOutcome {
            residual: (&projected - &reference).norm(),
            residual_bound: self.targets.len() as f64 * injected_epsilon / self.total_normalizer_sq.sqrt(),
            success_amplitude: projected.norm(),
            projected,
            reference,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

/// Convenience wrapper: build the construction and run it on `psi`.
pub fn lcu_channel(encodings: &[BlockEncoding], mu: &MuState, psi: &CVector, injected_epsilon: f64) -> Result<LcuOutcome> {
    LcuChannel::new(encodings, mu)?.apply(psi, injected_epsilon)
}

/// Exact encodings `dilate(A_j, s_j)` of every Kraus operator of `cp`.
pub fn kraus_encodings(cp: &CPMapApprox) -> Result<Vec<BlockEncoding>> {
    cp.terms().map(|t| dilate(&t.matrix, t.normalizer)).collect()
}

#[derive(Debug, Clone)]
pub struct OaaOutcome {
    pub state: CVector,
    /// Normalized `P₀W|ψ̂⟩`.
    pub good_state: CVector,
    pub amplitude: f64,
    /// `|⟨φ̂|out⟩|`
    pub overlap: f64,
}

/// `−W(I−2P₁)W†(I−2P₀)W|ψ̂⟩`, after checking that `‖P₀W|ψ̂⟩‖ = ½`.
pub fn oaa_step(w: &CMatrix, p0: &CMatrix, p1: &CMatrix, psi_hat: &CVector) -> Result<OaaOutcome> {
    let n = w.nrows();
    if !w.is_square() || p0.shape() != (n, n) || p1.shape() != (n, n) || psi_hat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: psi_hat.len(),
        });
    }
    let first = w * psi_hat;
    let good = p0 * &first;
    let amplitude = good.norm();
    if (amplitude - 0.5).abs() > OAA_PREMISE_TOL {
        return Err(Error::Contract {
            message: "amplitude amplification needs success amplitude 1/2".into(),
            measured: amplitude,
        });
    }
    let id = linalg::identity(n);
    let r0 = &id - p0 * c(2.0, 0.0);
    let r1 = &id - p1 * c(2.0, 0.0);
    let state = -(w * (r1 * (w.adjoint() * (r0 * first))));
    let good_state = good / c(amplitude, 0.0);
    let overlap = good_state.dotc(&state).norm();
    Ok(OaaOutcome {
        state,
        good_state,
        amplitude,
        overlap,
    })
}

#[derive(Debug, Clone)]
pub struct Dilution {
    pub theta: f64,
    /// `R(θ) ⊗ W` with the new qubit most significant.
    pub unitary: CMatrix,
}

impl Dilution {
    /// `|0⟩⟨0| ⊗ P` on the extended space.
    pub fn extend_projector(p: &CMatrix) -> CMatrix {
        let mut z = CMatrix::zeros(2, 2);
        z[(0, 0)] = ONE;
        linalg::kron(&z, p)
    }

    pub fn extend_state(v: &CVector) -> CVector {
        let mut out = CVector::zeros(2 * v.len());
        out.rows_mut(0, v.len()).copy_from(v);
        out
    }
}

/// Rotation `θ = arccos(1/(2a))` on a fresh ancilla so the combined success amplitude is ½.
pub fn dilute(success_amp: f64, w: &CMatrix) -> Result<Dilution> {
    const TOL: f64 = 1e-12;
    if !(success_amp >= 0.5 - TOL) || success_amp > 1.0 + TOL {
        return Err(Error::arg(format!(
            "success amplitude {success_amp} cannot be diluted to 1/2"
        )));
    }
    let theta = (0.5 / success_amp).min(1.0).acos();
    let (s, co) = theta.sin_cos();
    let r = CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]);
    Ok(Dilution {
        theta,
        unitary: linalg::kron(&r, w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    #[test]
    fn scalar_dilation() {
        let enc = dilate(&CMatrix::from_element(1, 1, c(0.5, 0.0)), 1.0).unwrap();
        let r3 = 3f64.sqrt() / 2.0;
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(r3, 0.0), c(r3, 0.0), c(-0.5, 0.0)]);
        assert!(linalg::max_abs_diff(enc.unitary(), &expected) < 1e-15);
    }

    #[test]
    fn unitary_dilation_keeps_operator() {
        let enc = dilate(&x(), 1.0).unwrap();
        assert!(linalg::max_abs_diff(&enc.encoded(), &x()) < 1e-15);
        assert!(dilate(&x(), 0.5).is_err());
    }

    #[test]
    fn sum_of_paulis() {
        let e = lcu_sum(&[dilate(&x(), 1.0).unwrap(), dilate(&z(), 1.0).unwrap()], &[1.0, 1.0]).unwrap();
        assert_eq!(e.alpha(), 2.0);
        assert!(e.extraction_error() < 1e-12);
        let single = lcu_sum(&[dilate(&x(), 1.0).unwrap()], &[1.0]).unwrap();
        assert_eq!(single.ancilla_qubits(), 1);
        assert!(linalg::max_abs_diff(single.unitary(), dilate(&x(), 1.0).unwrap().unitary()) < 1e-15);
    }

    #[test]
    fn lcu_rejects_mixed_ancillas() {
        let a = dilate(&x(), 1.0).unwrap();
        let b = lcu_sum(&[a.clone(), a.clone()], &[1.0, 1.0]).unwrap();
        assert!(lcu_sum(&[a, b], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dilution_angles() {
        let w = linalg::identity(2);
        assert!((dilute(1.0, &w).unwrap().theta - PI / 3.0).abs() < 1e-15);
        assert_eq!(dilute(0.5, &w).unwrap().theta, 0.0);
        assert!(dilute(0.4, &w).is_err());
    }

    #[test]
    fn oaa_rejects_wrong_amplitude() {
        let v = CMatrix::from_element(1, 1, c(0.6, 0.0));
        let enc = dilate(&v, 1.0).unwrap();
        let mut p = CMatrix::zeros(2, 2);
        p[(0, 0)] = ONE;
        let psi = CVector::from_vec(vec![ONE, ZERO]);
        match oaa_step(enc.unitary(), &p, &p, &psi) {
            Err(Error::Contract { measured, .. }) => assert!((measured - 0.6).abs() < 1e-15),
            other => panic!("expected contract error, got {other:?}"),
        }
    }
}
