//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to stderr
//! (bypassing libtest's capture) and then asserts.

use std::io::Write;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use lindsim::channel::diamond_sandwich;
use lindsim::duhamel::{
    bound_duhamel, bound_taylor, budget_segment_time, choose_orders, duhamel_terms_exact, enumerate_kraus,
    g_k_factorized, normalizer_sum_squares_closed_form, quadrature_total_bound, simulate, simulate_with, taylor_drift,
    DriftKind, SegmentBudget, SimulationOptions,
};
use lindsim::linalg::{self, c, CMatrix, CVector, ONE, ZERO};
use lindsim::primitives::{
    dilate, dilute, kraus_encodings, lcu_channel, mu_coefficients, oaa_step, Dilution, LcuChannel, MuState,
};
use lindsim::quadrature::{canonical_rule, nested_grid, simplex_volume};
use lindsim::time_dependent::{grid_for_precision, integrate_rk4, td_simulate, DysonConfig, Sampler, TimeDependentLindbladian};
use lindsim::{random, trace_norm, Lindbladian, NormalizingFactors, Superoperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance {id:02} {name}: {status} ({detail})");
    assert!(passed, "{name}: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Twenty seeded one- and two-qubit models with unit be-norm and one or two jumps.
fn model_set() -> Vec<Lindbladian> {
    (0..20u64)
        .map(|seed| {
            let d = if seed % 2 == 0 { 2 } else { 4 };
            let m = 1 + (seed / 2 % 2) as usize;
            random::lindbladian(&mut rng(1000 + seed), d, m, 1.0)
        })
        .collect()
}

const BETA_T: [f64; 3] = [0.25, 0.5, 0.75];

fn amplitude_damping(gamma: f64) -> Lindbladian {
    let l = CMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt(), 0.0), ZERO, ZERO]);
    Lindbladian::new(CMatrix::zeros(2, 2), vec![l]).unwrap()
}

fn lower(a: &Superoperator, b: &Superoperator) -> f64 {
    diamond_sandwich(a, b).unwrap().lower
}

#[test]
fn duhamel_truncation_within_bound() {
    let start = Instant::now();
    let models = model_set();
    let mut worst_ratio = 0.0f64;
    let mut violations = 0;
    let mut not_superlinear = 0;
    let mut quad_gap = 0.0f64;
    for model in &models {
        let beta = model.be_norm();
        for bt in BETA_T {
            let t = bt / beta;
            let exact = model.exact_channel(t).unwrap();
            let terms = duhamel_terms_exact(model, t, 5).unwrap();
            let mut partial = terms[0].clone();
            let mut errs = Vec::new();
            for (k, term) in terms.iter().enumerate().skip(1) {
                partial.add_scaled(term, 1.0);
                let e = lower(&partial, &exact);
                let b = bound_duhamel(k, t, beta);
                worst_ratio = worst_ratio.max(e / b);
                if e > b {
                    violations += 1;
                }
                errs.push(e);
            }
            // Superlinear decay: the log-decrement grows with K on average.
            let dec: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).ln()).collect();
            if dec[2] + dec[3] <= dec[0] + dec[1] {
                not_superlinear += 1;
            }
            // Fine nested quadrature for the higher orders.
            let k_fine = if model.dim() == 2 { 5 } else { 3 };
            let fine = g_k_factorized(model, t, k_fine, 12, DriftKind::Exact).unwrap();
            let mut reference = terms[0].clone();
            for term in &terms[1..=k_fine] {
                reference.add_scaled(term, 1.0);
            }
            quad_gap = quad_gap.max(fine.max_abs_diff(&reference));
            let e = lower(&fine, &exact);
            if e > bound_duhamel(k_fine, t, beta) + quadrature_total_bound(k_fine, 12, t, beta) {
                violations += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = violations == 0 && not_superlinear == 0 && quad_gap < 1e-12 && secs < 60.0;
    report(
        1,
        "duhamel truncation bound",
        passed,
        &format!(
            "worst err/bound {worst_ratio:.3e}, violations {violations}, non-superlinear {not_superlinear}, q=12 vs exact {quad_gap:.1e}, {secs:.1} s"
        ),
    );
}

#[test]
fn taylor_drift_within_bound() {
    let mut violations = 0;
    let mut worst_bound_ratio = 0.0f64;
    let mut worst_remainder_ratio = 0.0f64;
    for model in &model_set() {
        let beta = model.be_norm();
        let jn = linalg::spectral_norm(&model.effective_generator());
        for bt in BETA_T {
            let t = bt / beta;
            let exact = model.drift_semigroup(t).unwrap();
            for kp in 2..=10usize {
                let approx = Superoperator::kraus(&taylor_drift(model, t, kp).unwrap());
                let e = lower(&approx, &exact);
                let b = bound_taylor(kp, t, beta);
                let remainder = (jn * t).exp() * (jn * t).powi(kp as i32 + 1) / linalg::factorial(kp + 1);
                // Below ~1e-15 the Choi trace norm is at roundoff and says nothing.
                let floor = 1e-15;
                worst_bound_ratio = worst_bound_ratio.max(e / b);
                if e > floor {
                    worst_remainder_ratio = worst_remainder_ratio.max(e / remainder);
                }
                if e > b || e > 2.0 * remainder + floor {
                    violations += 1;
                }
            }
        }
    }
    report(
        2,
        "taylor drift bound",
        violations == 0,
        &format!(
            "worst err/bound {worst_bound_ratio:.3e}, worst err/remainder {worst_remainder_ratio:.3}, violations {violations}"
        ),
    );
}

#[test]
fn quadrature_identities() {
    let mut worst_moment = 0.0f64;
    let mut worst_nested = 0.0f64;
    for q in 1..=16 {
        for t in [0.1, 1.0, 7.0] {
            let rule = canonical_rule(q, t).unwrap();
            for ell in 0..2 * q {
                let rhs = t.powi(ell as i32 + 1) / (ell + 1) as f64;
                worst_moment = worst_moment.max((rule.moment(ell) - rhs).abs() / rhs);
            }
            // The nested rule integrates the simplex exactly once 2q ≥ k.
            for k in 0..=6usize.min(2 * q) {
                let vol = simplex_volume(k, t);
                let chain = lindsim::duhamel::nested_weight_totals(&rule, k)[k];
                worst_nested = worst_nested.max((chain - vol).abs() / vol);
                if k >= 1 && (q as f64).powi(k as i32) <= 1e5 {
                    let brute = nested_grid(k, q, t).unwrap().weight_total();
                    worst_nested = worst_nested.max((brute - vol).abs() / vol);
                }
            }
        }
    }
    // Simplex volume itself, by Monte Carlo: the ordered fraction of the cube.
    let mut r = rng(3);
    let samples = 200_000;
    let ordered = (0..samples)
        .filter(|_| {
            let mut prev = f64::INFINITY;
            (0..4).all(|_| {
                let x: f64 = r.random();
                let ok = x <= prev;
                prev = x;
                ok
            })
        })
        .count();
    let mc = ordered as f64 / samples as f64;
    let mc_err = (mc - simplex_volume(4, 1.0)).abs();
    let passed = worst_moment <= 1e-12 && worst_nested <= 1e-10 && mc_err < 5.0 * (mc / samples as f64).sqrt();
    report(
        3,
        "quadrature identities",
        passed,
        &format!("moment rel {worst_moment:.2e}, nested rel {worst_nested:.2e}, monte carlo simplex |Δ| {mc_err:.1e}"),
    );
}

#[test]
fn drift_kraus_identity() {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let d = 2 + i % 3;
        let m = i % 4;
        let beta = r.random_range(0.5..2.0);
        let model = random::lindbladian(&mut r, d, m, beta);
        let t: f64 = r.random_range(0.1..1.5);
        let kraus = model.drift_semigroup(t).unwrap();
        let generator = model.drift_generator_matrix().matrix() * c(t, 0.0);
        let vectorized = Superoperator::from_matrix(d, linalg::expm(&generator)).unwrap();
        worst = worst.max(kraus.max_abs_diff(&vectorized));
    }
    report(4, "drift kraus identity", worst <= 1e-11, &format!("max |Δ| {worst:.2e} over 50 models"));
}

#[test]
fn squared_generator_expansion() {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let d = 2 + i % 2;
        let l = random::operator_with_norm(&mut r, d, 1.0);
        let model = Lindbladian::new(CMatrix::zeros(d, d), vec![l.clone()]).unwrap();
        let rho = random::density_matrix(&mut r, d);
        let ld = l.adjoint();
        let n = &ld * &l;
        let half = c(0.5, 0.0);
        let quarter = c(0.25, 0.0);
        let expansion = &l * &l * &rho * &ld * &ld - &l * &n * &rho * &ld * half - &l * &rho * &n * &ld * half
            - &n * &l * &rho * &ld * half
            + &n * &n * &rho * quarter
            - &l * &rho * &ld * &n * half
            + &n * &rho * &n * half
            + &rho * &n * &n * quarter;
        let gen = model.liouvillian_matrix();
        let squared = Superoperator::from_matrix(d, gen.matrix() * gen.matrix()).unwrap();
        worst = worst.max(linalg::max_abs_diff(&squared.apply(&rho), &expansion));
    }
    report(5, "squared generator expansion", worst <= 1e-12, &format!("max |Δ| {worst:.2e} over 20 states"));
}

#[test]
fn end_to_end_precision() {
    let start = Instant::now();
    let damping = amplitude_damping(1.0);
    let mut r = rng(6);
    let rho0 = random::density_matrix(&mut r, 2);
    let sim = simulate(&damping, &rho0, 3.0, 1e-6).unwrap();
    let population_err = (sim.rho[(1, 1)].re - (-3.0f64).exp() * rho0[(1, 1)].re).abs();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..10 {
        let model = random::lindbladian(&mut r, 4, 1 + i % 2, 1.0);
        let rho = random::density_matrix(&mut r, 4);
        for eps in [1e-4, 1e-6] {
            let opts = SimulationOptions {
                verify: true,
                ..Default::default()
            };
            let sim = simulate_with(&model, &rho, 1.0, eps, opts).unwrap();
            let measured = sim.report.measured_choi_error.unwrap();
            worst = worst.max(measured / eps);
            if measured > eps {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "end-to-end precision",
        population_err <= 1e-6 && failures == 0 && secs < 120.0,
        &format!("damping |Δp| {population_err:.2e}, worst choi err/eps {worst:.2e}, {secs:.1} s"),
    );
}

#[test]
fn order_scaling() {
    let model = amplitude_damping(2.0);
    let t = budget_segment_time(&model, SegmentBudget::Conservative).unwrap();
    let mut rows = Vec::new();
    for p in 2..=10 {
        let eps = 10f64.powi(-p);
        let cfg = choose_orders(&model, t, eps).unwrap();
        let l = (1.0 / eps).ln();
        let scale = l / l.ln() + 1.0;
        rows.push((p, cfg.k.max(cfg.kp).max(cfg.q) as f64, scale));
    }
    // c is the smallest constant with order ≤ c·(L + 1) over the whole range.
    let fit = |rs: &[(i32, f64, f64)]| rs.iter().map(|(_, o, s)| o / s).fold(0.0, f64::max);
    let c_all = fit(&rows);
    let c_half = fit(&rows[..5]);
    let monotone = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let orders: Vec<String> = rows.iter().map(|(p, o, _)| format!("1e-{p}:{o}")).collect();
    report(
        7,
        "order scaling",
        monotone && c_all <= 2.0,
        &format!("fit c = {c_all:.3} (from 1e-2..1e-6 alone {c_half:.3}); max order {}", orders.join(" ")),
    );
}

fn random_kraus_set(r: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<CMatrix> {
    // Blocks of a random isometry: Σ A†A = I.
    let g = random::gaussian_matrix(r, d * count, d);
    let q = g.qr().q();
    (0..count).map(|j| q.rows(j * d, d).into_owned()).collect()
}

#[test]
fn lcu_channel_contract() {
    let mut r = rng(8);
    let mut worst_residual = 0.0f64;
    let mut failures = 0;
    for trial in 0..6 {
        let d = 2 + trial % 2;
        let kraus = random_kraus_set(&mut r, d, 2 + trial % 3);
        for eps in [0.0f64, 1e-8, 1e-6] {
            let s = 1.05;
            let encs: Vec<_> = kraus
                .iter()
                .map(|a| {
                    let noisy = if eps > 0.0 { a + random::operator_with_norm(&mut r, d, eps) } else { a.clone() };
                    dilate(&noisy, s).unwrap().with_target(a.clone(), eps * (1.0 + 1e-9)).unwrap()
                })
                .collect();
            let mu = MuState::from_normalizers(&vec![s; kraus.len()]).unwrap();
            let psi = random::pure_state(&mut r, d);
            let out = lcu_channel(&encs, &mu, &psi, eps).unwrap();
            let slack = 1e-14;
            worst_residual = worst_residual.max(out.residual / (out.residual_bound + slack));
            if out.residual > out.residual_bound + slack {
                failures += 1;
            }
        }
    }
    // Worst-case success probability λ_min(Φ*(I)) / Σs² on every budgeted segment.
    let mut worst_p = f64::INFINITY;
    for model in &model_set() {
        let t = budget_segment_time(model, SegmentBudget::Conservative).unwrap();
        let cfg = choose_orders(model, t, 1e-3).unwrap();
        let phi = g_k_factorized(model, t, cfg.k, cfg.q, DriftKind::Taylor(cfg.kp)).unwrap();
        let d = model.dim();
        let adjoint_identity = linalg::unvec(&(phi.matrix().adjoint() * linalg::vec(&linalg::identity(d))), d);
        let lam = linalg::hermitian_eigenvalues(&((&adjoint_identity + adjoint_identity.adjoint()) * c(0.5, 0.0)))[0];
        let s2 = normalizer_sum_squares_closed_form(model, t, cfg.k, cfg.q).unwrap();
        worst_p = worst_p.min(lam / s2);
        // Where the dense construction is small enough, run it as well.
        if d == 2 && model.num_jumps() == 1 {
            let cp = enumerate_kraus(model, t, &cfg).unwrap();
            let encs = kraus_encodings(&cp).unwrap();
            let ch = LcuChannel::new(&encs, &mu_coefficients(&cp).state).unwrap();
            let psi = random::pure_state(&mut r, 2);
            let p = ch.apply(&psi, 0.0).unwrap().success_amplitude.powi(2);
            worst_p = worst_p.min(p);
        }
    }
    report(
        8,
        "lcu channel contract",
        failures == 0 && worst_p >= 0.25,
        &format!("worst residual/bound {worst_residual:.3}, min success probability {worst_p:.4}"),
    );
}

fn pad(psi: &CVector, n: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v.rows_mut(0, psi.len()).copy_from(psi);
    v
}

#[test]
fn amplification_identity() {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    let mut cases = 0;
    // Unitaries encoded with normalizer 2.
    for d in [2, 4] {
        let v = random::gaussian_matrix(&mut r, d, d).qr().q();
        let enc = dilate(&v, 2.0).unwrap();
        let p = CMatrix::from_fn(2 * d, 2 * d, |i, j| if i == j && i < d { ONE } else { ZERO });
        let psi = random::pure_state(&mut r, d);
        let out = oaa_step(enc.unitary(), &p, &p, &pad(&psi, 2 * d)).unwrap();
        worst = worst.max((&out.state - &out.good_state).norm());
        cases += 1;
    }
    // Exact channels, diluted down to amplitude ½ (the end-segment situation).
    let damping = {
        let p: f64 = 0.3;
        vec![
            CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c((1.0 - p).sqrt(), 0.0)]),
            CMatrix::from_row_slice(2, 2, &[ZERO, c(p.sqrt(), 0.0), ZERO, ZERO]),
        ]
    };
    let mut channels = vec![(damping.clone(), 1.0), (damping, 2f64.sqrt())];
    for count in [2, 3] {
        channels.push((random_kraus_set(&mut r, 2, count), 1.0));
    }
    for (kraus, scale) in channels {
        let encs: Vec<_> = kraus.iter().map(|a| dilate(a, scale).unwrap()).collect();
        let ch = LcuChannel::new(&encs, &MuState::from_normalizers(&vec![scale; kraus.len()]).unwrap()).unwrap();
        for _ in 0..3 {
            let psi = random::pure_state(&mut r, 2);
            let amp = ch.apply(&psi, 0.0).unwrap().success_amplitude;
            let dil = dilute(amp, &ch.unitary).unwrap();
            let p0 = Dilution::extend_projector(&ch.good_projector());
            let p1 = Dilution::extend_projector(&ch.input_projector());
            let out = oaa_step(&dil.unitary, &p0, &p1, &Dilution::extend_state(&ch.embed(&psi))).unwrap();
            worst = worst.max((&out.state - &out.good_state).norm());
            cases += 1;
        }
    }
    report(9, "amplification identity", worst <= 1e-10, &format!("max ‖out − target‖ {worst:.2e} over {cases} cases"));
}

/// H(t) = σ_z + 0.3 cos(t) σ_x with a unit-rate damping jump.
fn driven_damped() -> TimeDependentLindbladian {
    let sx = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let sz = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    let l = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
    let sampler: Sampler = Arc::new(move |t: f64| (&sz + &sx * c(0.3 * t.cos(), 0.0), vec![l.clone()]));
    let factors = NormalizingFactors {
        alpha0: 1.09f64.sqrt(),
        alphas: vec![1.0],
    };
    TimeDependentLindbladian::new(sampler, factors, 0.3).unwrap()
}

#[test]
fn time_dependent_against_rk4() {
    let tl = driven_damped();
    let rho0 = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.7, 0.0)]);
    let t = 1.0;
    let reference = integrate_rk4(&tl, &rho0, t, 100_000).unwrap();
    let distance = |rho: &CMatrix| 0.5 * trace_norm(&(rho - &reference));
    let eps = 1e-4;
    let grid = grid_for_precision(&tl, t, eps).unwrap();
    let main = distance(&td_simulate(&tl, &rho0, t, eps, DysonConfig { order: None, grid }).unwrap().rho);
    // Grid refinement with series orders fixed tight enough that the grid dominates.
    let errs: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&m| distance(&td_simulate(&tl, &rho0, t, 1e-9, DysonConfig { order: None, grid: m }).unwrap().rho))
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let halves = ratios.iter().all(|x| (1.0..=4.0).contains(x));
    report(
        10,
        "time-dependent vs rk4",
        main <= eps && halves,
        &format!("trace distance {main:.2e} at M = {grid}, error ratios under M doubling {ratios:.2?}"),
    );
}

#[test]
fn cli_outputs_are_deterministic() {
    let bin = env!("CARGO_BIN_EXE_lindsim");
    let models = concat!(env!("CARGO_MANIFEST_DIR"), "/models/");
    let commands: Vec<Vec<String>> = [
        vec!["simulate", "--model", "ising_pair.json", "--time", "0.7", "--eps", "1e-4"],
        vec!["analyze-error", "--model", "driven_qubit.json", "--time", "0.3,0.6"],
        vec!["analyze-error", "--random-qubits", "2", "--seed", "5", "--random-jumps", "2", "--k", "1,2", "--kp", "4"],
        vec!["quadrature", "--q", "1,4,9", "--t", "0.5,3"],
        vec!["primitives-verify", "--seed", "11"],
        vec!["kraus-dump", "--model", "ising_pair.json", "--time", "0.3", "--k", "2", "--kp", "4", "--q", "3"],
        vec!["td-simulate", "--model", "ramped_damping.json", "--time", "0.5", "--eps", "1e-3", "--grid", "40"],
    ]
    .iter()
    .map(|args| {
        args.iter()
            .map(|a| if a.ends_with(".json") { format!("{models}{a}") } else { a.to_string() })
            .collect()
    })
    .collect();
    let mut mismatches = Vec::new();
    for args in &commands {
        let outputs: Vec<Vec<u8>> = ["1", "2", "4", "1"]
            .iter()
            .map(|threads| {
                let out = Command::new(bin).args(args).env("RAYON_NUM_THREADS", threads).output().unwrap();
                assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
                out.stdout
            })
            .collect();
        if outputs.iter().any(|o| o != &outputs[0] || o.is_empty()) {
            mismatches.push(args[0].clone());
        }
    }
    report(
        11,
        "deterministic cli output",
        mismatches.is_empty(),
        &format!("{} commands x 4 runs over 1/2/4 threads, mismatches {mismatches:?}", commands.len()),
    );
}
