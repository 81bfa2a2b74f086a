use lindsim::channel::{choi_distance, cptp_report};
use lindsim::duhamel::*;
use lindsim::linalg::{self, c, CMatrix, ONE, ZERO};
use lindsim::{random, Lindbladian, Superoperator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn amplitude_damping(gamma: f64) -> Lindbladian {
    let l = CMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt(), 0.0), ZERO, ZERO]);
    Lindbladian::new(CMatrix::zeros(2, 2), vec![l]).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn single_jump_chain_matches_vectorized_generators() {
    let m = amplitude_damping(1.0);
    let half = m.drift_generator_matrix().matrix() * c(0.5, 0.0);
    let e = Superoperator::from_matrix(2, linalg::expm(&half)).unwrap();
    let alt = e.compose(&m.jump_superoperator().compose(&e));
    let f = f_k(&m, 1.0, &[0.5]).unwrap();
    assert!(f.max_abs_diff(&alt) < 1e-14);
}

#[test]
fn no_jumps_gives_exact_channel_for_any_order() {
    let mut r = rng(1);
    let l = random::lindbladian(&mut r, 2, 0, 1.0);
    let g = g_k_quadrature(&l, 0.8, 3, 3).unwrap();
    assert!(g.max_abs_diff(&l.exact_channel(0.8).unwrap()) < 1e-13);
}

#[test]
fn quadrature_series_obeys_truncation_bound() {
    let m = amplitude_damping(1.0);
    let t = 0.5 / m.be_norm();
    let g = g_k_quadrature(&m, t, 4, 4).unwrap();
    let err = choi_distance(&g, &m.exact_channel(t).unwrap());
    assert!(err <= bound_duhamel(4, t, m.be_norm()), "{err}");
}

#[test]
fn exact_integral_series_converges_to_channel() {
    let mut r = rng(2);
    let l = random::lindbladian(&mut r, 4, 2, 1.0);
    let exact = l.exact_channel(0.5).unwrap();
    let g = g_k_exact(&l, 0.5, 14).unwrap();
    assert!(g.max_abs_diff(&exact) < 1e-12);
}

#[test]
fn high_order_quadrature_approaches_exact_integrals() {
    let mut r = rng(3);
    let l = random::lindbladian(&mut r, 2, 2, 1.0);
    let exact = g_k_exact(&l, 0.6, 3).unwrap();
    let quad = g_k_quadrature(&l, 0.6, 3, 10).unwrap();
    assert!(quad.max_abs_diff(&exact) < 1e-13, "{}", quad.max_abs_diff(&exact));
}

#[test]
fn three_assembly_routes_agree() {
    let m = amplitude_damping(1.0);
    let t = 0.4;
    let cfg = TruncationConfig { k: 3, kp: 5, q: 3, segment_time: t, num_segments: 1 };
    let cp = enumerate_kraus(&m, t, &cfg).unwrap();
    let from_terms = cp.superoperator_from_terms().unwrap();
    let tuples = g_k_quadrature_with(&m, t, 3, 3, DriftKind::Taylor(5)).unwrap();
    let factorized = cp.as_superoperator().unwrap();
    assert!(from_terms.max_abs_diff(&tuples) < 1e-12);
    assert!(factorized.max_abs_diff(&tuples) < 1e-12);

    let mut r = rng(4);
    let l = random::lindbladian(&mut r, 4, 2, 1.3);
    let tuples = g_k_quadrature_with(&l, t, 3, 2, DriftKind::Exact).unwrap();
    let factorized = g_k_factorized(&l, t, 3, 2, DriftKind::Exact).unwrap();
    assert!(factorized.max_abs_diff(&tuples) < 1e-12);
}

#[test]
fn kraus_terms_carry_consistent_metadata() {
    let mut r = rng(5);
    let l = random::lindbladian(&mut r, 2, 2, 1.0);
    let t = 0.3;
    let cfg = TruncationConfig { k: 2, kp: 4, q: 2, segment_time: t, num_segments: 1 };
    let cp = enumerate_kraus(&l, t, &cfg).unwrap();
    assert_eq!(cp.len(), 1 + 4 + 16);
    let rule = cp.rule().unwrap().clone();
    for term in cp.terms() {
        let mut x = t;
        let mut w = 1.0;
        for &j in term.nodes.iter().rev() {
            w *= rule.scaled_weight(j, x);
            x = rule.scaled_node(j, x);
        }
        assert!((term.coefficient - w.sqrt()).abs() < 1e-15);
        let alpha: f64 = term.jumps.iter().map(|&j| l.alphas()[j]).product();
        let expected = term.coefficient * (l.be_norm() * t).exp() * alpha;
        assert!((term.normalizer - expected).abs() < 1e-14);
    }
    let a0 = cp.term(0).matrix;
    assert!(linalg::max_abs_diff(&a0, &taylor_drift(&l, t, 4).unwrap()) < 1e-15);
}

#[test]
fn normalizer_sum_matches_closed_form() {
    let mut r = rng(6);
    let l = random::lindbladian(&mut r, 2, 2, 1.0);
    for (k, q) in [(0, 1), (1, 3), (2, 2), (3, 3)] {
        let cfg = TruncationConfig { k, kp: 3, q, segment_time: 0.2, num_segments: 1 };
        let cp = enumerate_kraus(&l, 0.2, &cfg).unwrap();
        let a = normalizer_sum_squares(&cp);
        let b = normalizer_sum_squares_closed_form(&l, 0.2, k, q).unwrap();
        assert!((a - b).abs() <= 1e-10 * b, "{a} {b}");
    }
    // m = 1, α = 1, K = 1: e^{2βt}(1 + t)
    let one = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
    let l = Lindbladian::new(CMatrix::zeros(2, 2), vec![one]).unwrap();
    let v = normalizer_sum_squares_closed_form(&l, 0.7, 1, 4).unwrap();
    assert!((v - (2.0 * 0.5 * 0.7f64).exp() * 1.7).abs() < 1e-13);
}

#[test]
fn budgeted_segment_keeps_normalizers_below_two() {
    let mut r = rng(7);
    for _ in 0..5 {
        let l = random::lindbladian(&mut r, 2, 2, 1.0);
        let t = budget_segment_time(&l, SegmentBudget::Conservative).unwrap();
        let f = budget_expression(SegmentBudget::Conservative, l.be_norm(), l.jump_weight(), t);
        assert!((2.0 - 1e-9..=2.0).contains(&f), "{f}");
        for k in 0..6 {
            let v = normalizer_sum_squares_closed_form(&l, t, k, 6).unwrap();
            assert!(v <= 2.0 + 1e-9, "{v}");
        }
    }
}

#[test]
fn approximant_is_completely_positive() {
    let mut r = rng(8);
    for _ in 0..5 {
        let l = random::lindbladian(&mut r, 2, 2, 1.0);
        let t = 0.3;
        let cfg = choose_orders(&l, t, 1e-3).unwrap();
        let cp = enumerate_kraus(&l, t, &cfg).unwrap();
        let rep = cptp_report(&cp.as_superoperator().unwrap());
        assert!(rep.min_choi_eigenvalue >= -1e-10);
        assert!(rep.trace_preservation_residual <= 1e-3);
    }
}

#[test]
fn amplitude_damping_end_to_end() {
    let m = amplitude_damping(1.0);
    let rho0 = CMatrix::from_row_slice(2, 2, &[c(0.25, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.75, 0.0)]);
    let sim = simulate(&m, &rho0, 3.0, 1e-6).unwrap();
    let expected = (-3.0f64).exp() * 0.75;
    assert!((sim.rho[(1, 1)].re - expected).abs() <= 1e-6, "{}", sim.rho[(1, 1)]);
    assert!((sim.report.segment_time * sim.report.segments as f64 - 3.0).abs() < 1e-12);
}

#[test]
fn closed_dynamics_are_unitary() {
    let z = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    let l = Lindbladian::new(z.clone(), vec![]).unwrap();
    let rho0 = CMatrix::from_element(2, 2, c(0.5, 0.0));
    let sim = simulate(&l, &rho0, 2.0, 1e-8).unwrap();
    let u = linalg::expm(&(z * c(0.0, -2.0)));
    let expected = &u * &rho0 * u.adjoint();
    assert!(linalg::max_abs_diff(&sim.rho, &expected) < 1e-8);
    assert_eq!(sim.report.k, 0);
}

#[test]
fn zero_time_returns_initial_state() {
    let m = amplitude_damping(1.0);
    let rho0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
    assert_eq!(simulate(&m, &rho0, 0.0, 1e-3).unwrap().rho, rho0);
}

#[test]
fn orders_are_monotone_in_precision() {
    let m = amplitude_damping(1.0);
    let t = 0.5 / m.be_norm();
    let small = choose_orders(&m, t, 1.0).unwrap();
    assert!(small.k <= 3 && small.q <= 3 && small.kp <= 4, "{small:?}");
    let mut prev = small;
    let mut eps = 1.0;
    for _ in 0..30 {
        eps /= 2.0;
        let cur = choose_orders(&m, t, eps).unwrap();
        assert!(cur.k >= prev.k && cur.kp >= prev.kp && cur.q >= prev.q);
        prev = cur;
    }
}
