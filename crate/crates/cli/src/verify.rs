//! Seeded self-checks of the block-encoding primitives.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use lindsim::duhamel::{budget_segment_time, choose_orders, enumerate_kraus, taylor_drift, SegmentBudget};
use lindsim::linalg::{self, c, CMatrix, CVector, ONE, ZERO};
use lindsim::primitives::{
    dilate, dilute, kraus_encodings, lcu_channel, lcu_sum, mu_coefficients, oaa_step, unitarity_residual, Dilution,
    LcuChannel, MuState, OAA_PREMISE_TOL,
};
use lindsim::{random, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        passed: measured <= threshold,
        measured,
        threshold,
        comparison: Comparison::AtMost,
    }
}

fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        passed: measured >= threshold,
        measured,
        threshold,
        comparison: Comparison::AtLeast,
    }
}

fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

fn amplitude_damping_kraus(p: f64) -> [CMatrix; 2] {
    [
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c((1.0 - p).sqrt(), 0.0)]),
        CMatrix::from_row_slice(2, 2, &[ZERO, c(p.sqrt(), 0.0), ZERO, ZERO]),
    ]
}

fn first_block_projector(dim: usize, keep: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |r, col| if r == col && r < keep { ONE } else { ZERO })
}

fn pad(psi: &CVector, dim: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v.rows_mut(0, psi.len()).copy_from(psi);
    v
}

pub fn primitives_report(seed: u64) -> Result<VerifyReport, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let a = random::gaussian_matrix(&mut rng, 3, 3);
    let enc = dilate(&a, linalg::spectral_norm(&a))?;
    checks.push(at_most("dilate_unitarity", unitarity_residual(enc.unitary()), 1e-12));
    checks.push(at_most("dilate_extraction", enc.extraction_error(), 1e-12));

    let xz = lcu_sum(&[dilate(&pauli_x(), 1.0)?, dilate(&pauli_z(), 1.0)?], &[1.0, 1.0])?;
    let target = pauli_x() + pauli_z();
    checks.push(at_most(
        "lcu_sum_x_plus_z",
        linalg::spectral_norm(&(xz.encoded() - target)).max((xz.alpha() - 2.0).abs()),
        1e-12,
    ));

    let ops: Vec<CMatrix> = (0..3).map(|_| random::gaussian_matrix(&mut rng, 2, 2)).collect();
    let weights: Vec<f64> = (0..3).map(|i| 0.25 + 0.5 * i as f64).collect();
    let encs = ops
        .iter()
        .map(|op| dilate(op, 1.5 * linalg::spectral_norm(op)))
        .collect::<Result<Vec<_>, _>>()?;
    let sum = lcu_sum(&encs, &weights)?;
    let direct = ops
        .iter()
        .zip(&weights)
        .fold(CMatrix::zeros(2, 2), |acc, (op, &w)| acc + op * c(w, 0.0));
    checks.push(at_most(
        "lcu_sum_random",
        linalg::spectral_norm(&(sum.encoded() - direct)).max(unitarity_residual(sum.unitary())),
        1e-11,
    ));

    // Truncated Taylor series of the drift generator as an LCU of its powers.
    let model = random::lindbladian(&mut rng, 2, 1, 1.0);
    let j = model.effective_generator();
    let beta = model.be_norm();
    let (t, order) = (0.4f64, 6usize);
    let mut power = linalg::identity(2);
    let mut encs = Vec::new();
    let mut y = Vec::new();
    for ell in 0..=order {
        encs.push(dilate(&power, beta.powi(ell as i32))?);
        y.push(t.powi(ell as i32) / linalg::factorial(ell));
        power = &power * &j;
    }
    let taylor = lcu_sum(&encs, &y)?;
    let expected: f64 = (0..=order).map(|ell| (beta * t).powi(ell as i32) / linalg::factorial(ell)).sum();
    checks.push(at_most("lcu_taylor_normalizer", (taylor.alpha() - expected).abs(), 1e-12));
    checks.push(at_most(
        "lcu_taylor_operator",
        linalg::max_abs_diff(&taylor.encoded(), &taylor_drift(&model, t, order)?),
        1e-12,
    ));

    // Imperfect encodings: residual of the flagged branch stays within m·ε/√Σs².
    let kraus = amplitude_damping_kraus(0.4);
    for eps in [0.0f64, 1e-8, 1e-6] {
        let encs = kraus
            .iter()
            .map(|k| {
                let noise = if eps > 0.0 {
                    random::operator_with_norm(&mut rng, 2, eps)
                } else {
                    CMatrix::zeros(2, 2)
                };
                dilate(&(k + noise), 1.1)?.with_target(k.clone(), eps * (1.0 + 1e-9))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mu = MuState::from_normalizers(&[1.1, 1.1])?;
        let psi = random::pure_state(&mut rng, 2);
        let out = lcu_channel(&encs, &mu, &psi, eps)?;
        checks.push(at_most(format!("m_apply_eps_{eps:e}"), out.residual, out.residual_bound + 1e-14));
    }

    // Coefficient state, channel equivalence and success probability on a budgeted segment.
    let model = random::lindbladian(&mut rng, 2, 1, 1.0);
    let t = budget_segment_time(&model, SegmentBudget::Conservative)
        .ok_or_else(|| Error::InvalidArgument("no feasible segment time".into()))?;
    let cfg = choose_orders(&model, t, 1e-2)?;
    let cp = enumerate_kraus(&model, t, &cfg)?;
    let mu = mu_coefficients(&cp);
    let factorization = (0..cp.len())
        .map(|i| {
            let (k, jumps, nodes) = cp.term_index(i);
            let s = cp.normalizer(i);
            (mu.registers.amplitude(k, &jumps, &nodes) * mu.common_factor - s).abs() / s
        })
        .fold(0.0, f64::max);
    checks.push(at_most("mu_factorization", factorization, 1e-12));
    let encs = kraus_encodings(&cp)?;
    let ch = LcuChannel::new(&encs, &mu.state)?;
    let psi = random::pure_state(&mut rng, 2);
    let out = ch.apply(&psi, 0.0)?;
    let s2: f64 = encs.iter().map(|e| e.alpha().powi(2)).sum();
    let expected = cp.as_superoperator()?.apply(&linalg::projector(&psi));
    checks.push(at_most(
        "lcu_channel_equivalence",
        linalg::max_abs_diff(&(out.reduced_state(2) * c(s2, 0.0)), &expected),
        1e-9,
    ));
    checks.push(at_least("success_probability", out.success_amplitude.powi(2), 0.25));

    // One round of amplification on an encoding of a unitary scaled by ½.
    let v = random::gaussian_matrix(&mut rng, 2, 2).qr().q();
    let enc = dilate(&v, 2.0)?;
    let p = first_block_projector(4, 2);
    let psi = random::pure_state(&mut rng, 2);
    let oaa = oaa_step(enc.unitary(), &p, &p, &pad(&psi, 4))?;
    let fidelity_gap = (oaa.overlap - 1.0).abs().max((oaa.state.rows(0, 2).into_owned() - &v * &psi).norm());
    checks.push(at_most("oaa_scaled_unitary", fidelity_gap, 1e-10));

    // Diluting an exact channel to amplitude ½ before amplifying.
    let kraus = amplitude_damping_kraus(0.3);
    for (label, scale) in [("1", 1.0), ("sqrt2", 2f64.sqrt())] {
        let encs = kraus.iter().map(|k| dilate(k, scale)).collect::<Result<Vec<_>, _>>()?;
        let ch = LcuChannel::new(&encs, &MuState::from_normalizers(&[scale, scale])?)?;
        let psi = random::pure_state(&mut rng, 2);
        let amp = ch.apply(&psi, 0.0)?.success_amplitude;
        let dil = dilute(amp, &ch.unitary)?;
        let p0 = Dilution::extend_projector(&ch.good_projector());
        let p1 = Dilution::extend_projector(&ch.input_projector());
        let psi_hat = Dilution::extend_state(&ch.embed(&psi));
        let oaa = oaa_step(&dil.unitary, &p0, &p1, &psi_hat)?;
        checks.push(at_most(format!("oaa_diluted_scale_{label}"), (oaa.overlap - 1.0).abs(), 1e-10));
    }

    // Amplitude 0.6 violates the premise and must be refused.
    let enc = dilate(&v, 1.0 / 0.6)?;
    let refused = match oaa_step(enc.unitary(), &p, &p, &pad(&psi, 4)) {
        Err(Error::Contract { measured, .. }) => (measured - 0.5).abs(),
        _ => 0.0,
    };
    checks.push(at_least("oaa_rejects_amplitude_0.6", refused, OAA_PREMISE_TOL));

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { seed, checks, all_passed })
}
