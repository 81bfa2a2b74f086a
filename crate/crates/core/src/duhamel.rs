//! Duhamel-series approximants of `e^{ℒt}` and the completely positive Kraus form.
//!
//! Iterating Duhamel's principle with the drift part as the homogeneous
//! evolution gives
//!
//! ```text
//! 𝒢_K(t) = 𝒦[e^{Jt}] + Σ_{k=1}^{K} ∫_{0≤s₁≤…≤s_k≤t} ℱ_k(s_k, …, s₁) ds
//! ℱ_k    = 𝒦[e^{J(t−s_k)}] ℒ_J 𝒦[e^{J(s_k−s_{k−1})}] ℒ_J ⋯ ℒ_J 𝒦[e^{J s₁}]
//! ```
//!
//! The simplex integrals are replaced by nested Gauss–Legendre sums and the drift
//! exponentials by truncated Taylor series, which leaves a sum of Kraus maps
//! `Σ 𝒦[A_j]`: completely positive by construction.
//!
//! Three independent assembly routes exist and are cross-checked in tests:
//! explicit tuple enumeration ([`g_k_quadrature`]), explicit Kraus operators
//! ([`CPMapApprox::superoperator_from_terms`]) and a memoized recursion over the
//! nested grid ([`g_k_factorized`]) that is cheap enough for end-to-end runs.
//! [`g_k_exact`] evaluates the exact-integral series through a block
//! bidiagonal exponential.

use std::collections::HashMap;

use serde::Serialize;

use crate::channel;
use crate::error::{Error, Result};
use crate::linalg::{self, c, factorial, CMatrix, CompensatedSum};
use crate::model::Lindbladian;
use crate::par;
use crate::quadrature::{self, NestedGrid, QuadratureRule, MAX_TUPLES};
use crate::superop::Superoperator;

/// Search cap for each of `K`, `K'` and `q` in [`choose_orders`].
pub const ORDER_CAP: usize = 40;
/// Largest number of memoized states the factorized recursion may create.
pub const MAX_RECURSION_STATES: usize = 2_000_000;

/// How the drift exponential `e^{Js}` is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    Exact,
    /// Truncated Taylor series of the given order.
    Taylor(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Drift {
    generator: CMatrix,
    kind: DriftKind,
}

impl Drift {
    pub(crate) fn new(model: &Lindbladian, kind: DriftKind) -> Self {
        Self {
            generator: model.effective_generator(),
            kind,
        }
    }

    pub(crate) fn propagator(&self, s: f64) -> CMatrix {
        match self.kind {
            DriftKind::Exact => linalg::expm(&(&self.generator * c(s, 0.0))),
            DriftKind::Taylor(order) => linalg::taylor_exp(&self.generator, s, order),
        }
    }

    pub(crate) fn superop(&self, s: f64) -> Superoperator {
        Superoperator::kraus(&self.propagator(s))
    }
}

/// `𝒥_{K'}` Kraus operator: `Σ_{ℓ=0}^{K'} (Js)^ℓ/ℓ!`.
pub fn taylor_drift(model: &Lindbladian, s: f64, kp: usize) -> Result<CMatrix> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::arg(format!("drift time must be nonnegative, got {s}")));
    }
    Ok(linalg::taylor_exp(&model.effective_generator(), s, kp))
}

fn check_times(t: f64, s: &[f64]) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::arg(format!("evolution time must be nonnegative, got {t}")));
    }
    let mut prev = 0.0;
    for &x in s {
        if !(x >= prev) {
            return Err(Error::arg("integration times must be ascending and nonnegative"));
        }
        prev = x;
    }
    if prev > t {
        return Err(Error::arg(format!("integration time {prev} exceeds t = {t}")));
    }
    Ok(())
}

/// `ℱ_k(s_k, …, s₁)` with exact drift exponentials; `s` is ascending (`s₁` first).
pub fn f_k(model: &Lindbladian, t: f64, s: &[f64]) -> Result<Superoperator> {
    check_times(t, s)?;
    let drift = Drift::new(model, DriftKind::Exact);
    Ok(f_k_with(&drift, &model.jump_superoperator(), t, s))
}

/// `ℱ_k` with the drift realized by `kind`.
pub fn f_k_drift(model: &Lindbladian, t: f64, s: &[f64], kind: DriftKind) -> Result<Superoperator> {
    check_times(t, s)?;
    let drift = Drift::new(model, kind);
    Ok(f_k_with(&drift, &model.jump_superoperator(), t, s))
}

fn f_k_with(drift: &Drift, jump: &Superoperator, t: f64, s: &[f64]) -> Superoperator {
    let mut acc = drift.superop(s.first().copied().unwrap_or(t));
    for (i, &si) in s.iter().enumerate() {
        let next = s.get(i + 1).copied().unwrap_or(t);
        acc = drift.superop(next - si).compose(&jump.compose(&acc));
    }
    acc
}

fn check_grid_budget(k_max: usize, q: usize) -> Result<()> {
    let total: f64 = (1..=k_max).map(|k| (q as f64).powi(k as i32)).sum();
    if total > MAX_TUPLES {
        return Err(Error::ResourceLimit {
            what: "nested quadrature enumeration",
            requested: total,
            limit: MAX_TUPLES,
        });
    }
    Ok(())
}

/// `𝒢_K` with nested Gauss–Legendre sums and exact drift exponentials.
pub fn g_k_quadrature(model: &Lindbladian, t: f64, k_order: usize, q: usize) -> Result<Superoperator> {
    g_k_quadrature_with(model, t, k_order, q, DriftKind::Exact)
}

/// `𝒢_K` by direct enumeration of every nested tuple. Work is split over tuples
/// and partial sums are combined by a fixed-shape tree.
pub fn g_k_quadrature_with(
    model: &Lindbladian,
    t: f64,
    k_order: usize,
    q: usize,
    kind: DriftKind,
) -> Result<Superoperator> {
    check_times(t, &[])?;
    let drift = Drift::new(model, kind);
    let mut acc = drift.superop(t);
    if k_order == 0 || model.num_jumps() == 0 || t == 0.0 {
        return Ok(acc);
    }
    check_grid_budget(k_order, q)?;
    let rule = quadrature::canonical_rule(q, t)?;
    let jump = model.jump_superoperator();
    for k in 1..=k_order {
        let grid = NestedGrid::new(k, rule.clone())?;
        let partial = par::chunked_reduce(
            grid.len(),
            par::DEFAULT_CHUNK,
            |range| {
                let mut local = Superoperator::zeros(model.dim());
                for i in range {
                    let p = grid.point(i);
                    let f = f_k_with(&drift, &jump, t, &p.ascending_times());
                    local.add_scaled(&f, p.weight_product());
                }
                local
            },
            |a, b| &a + &b,
        );
        if let Some(p) = partial {
            acc.add_scaled(&p, 1.0);
        }
    }
    Ok(acc)
}

/// `𝒢_K` through the recursion
/// `H_r(x) = 𝒦[D(x)] + Σ_j v_j(x) 𝒦[D(x − u_j(x))] ℒ_J H_{r−1}(u_j(x))`,
/// memoized on the multiset of indices that determines each node.
pub fn g_k_factorized(
    model: &Lindbladian,
    t: f64,
    k_order: usize,
    q: usize,
    kind: DriftKind,
) -> Result<Superoperator> {
    check_times(t, &[])?;
    let drift = Drift::new(model, kind);
    if k_order == 0 || model.num_jumps() == 0 || t == 0.0 {
        return Ok(drift.superop(t));
    }
    check_recursion_budget(k_order, q)?;
    let rule = quadrature::canonical_rule(q, t)?;
    let ops = ConstantOps {
        drift: &drift,
        jump: model.jump_superoperator(),
    };
    Ok(factorized_series(&ops, &rule, k_order))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) fn check_recursion_budget(k_order: usize, q: usize) -> Result<()> {
    let states = binomial(q + k_order, k_order);
    if states > MAX_RECURSION_STATES as f64 {
        return Err(Error::ResourceLimit {
            what: "factorized series recursion",
            requested: states,
            limit: MAX_RECURSION_STATES as f64,
        });
    }
    Ok(())
}

/// Drift and jump superoperators of one segment, in segment-relative time.
pub(crate) trait SeriesOps {
    /// Drift evolution from `from` to `to`.
    fn drift(&self, from: f64, to: f64) -> Superoperator;
    /// `ℒ_J` at time `at`.
    fn jump(&self, at: f64) -> Superoperator;
}

struct ConstantOps<'a> {
    drift: &'a Drift,
    jump: Superoperator,
}

impl SeriesOps for ConstantOps<'_> {
    fn drift(&self, from: f64, to: f64) -> Superoperator {
        self.drift.superop(to - from)
    }

    fn jump(&self, _at: f64) -> Superoperator {
        self.jump.clone()
    }
}

/// Series truncated at order `k_order` over `[0, rule.interval_length]`.
pub(crate) fn factorized_series(ops: &dyn SeriesOps, rule: &QuadratureRule, k_order: usize) -> Superoperator {
    let mut rec = Recursion {
        rule,
        ops,
        memo: HashMap::new(),
    };
    rec.eval(k_order, &[])
}

struct Recursion<'a> {
    rule: &'a QuadratureRule,
    ops: &'a dyn SeriesOps,
    memo: HashMap<(usize, Vec<u8>), Superoperator>,
}

impl Recursion<'_> {
    fn node(&self, multiset: &[u8]) -> f64 {
        multiset
            .iter()
            .fold(self.rule.interval_length, |x, &j| self.rule.scaled_node(j as usize, x))
    }

    fn eval(&mut self, remaining: usize, multiset: &[u8]) -> Superoperator {
        let key = (remaining, multiset.to_vec());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let x = self.node(multiset);
        let mut acc = self.ops.drift(0.0, x);
        if remaining > 0 {
            for j in 0..self.rule.order {
                let mut child = multiset.to_vec();
                let pos = child.partition_point(|&v| v <= j as u8);
                child.insert(pos, j as u8);
                let inner = self.eval(remaining - 1, &child);
                let y = self.node(&child);
                let w = self.rule.scaled_weight(j, x);
                let term = self.ops.drift(y, x).compose(&self.ops.jump(y).compose(&inner));
                acc.add_scaled(&term, w);
            }
        }
        self.memo.insert(key, acc.clone());
        acc
    }
}

/// Exact-integral Duhamel terms `Φ_0, …, Φ_K` where `Φ_k = ∫ ℱ_k`.
///
/// They solve `Φ_k' = ℒ_D Φ_k + ℒ_J Φ_{k−1}`, so they are the first block column
/// of the exponential of the block lower-bidiagonal generator with `ℒ_D` on the
/// diagonal and `ℒ_J` below it.
pub fn duhamel_terms_exact(model: &Lindbladian, t: f64, k_order: usize) -> Result<Vec<Superoperator>> {
    check_times(t, &[])?;
    let d2 = model.dim() * model.dim();
    let n = (k_order + 1) * d2;
    let drift = model.drift_generator_matrix();
    let jump = model.jump_superoperator();
    let mut gen = CMatrix::zeros(n, n);
    for b in 0..=k_order {
        gen.view_mut((b * d2, b * d2), (d2, d2)).copy_from(drift.matrix());
        if b > 0 {
            gen.view_mut((b * d2, (b - 1) * d2), (d2, d2)).copy_from(jump.matrix());
        }
    }
    let e = linalg::expm(&(gen * c(t, 0.0)));
    Ok((0..=k_order)
        .map(|b| {
            Superoperator::from_matrix_unchecked(model.dim(), e.view((b * d2, 0), (d2, d2)).into_owned())
        })
        .collect())
}

/// `𝒢_K(t)` with exact integrals.
pub fn g_k_exact(model: &Lindbladian, t: f64, k_order: usize) -> Result<Superoperator> {
    let terms = duhamel_terms_exact(model, t, k_order)?;
    let mut acc = Superoperator::zeros(model.dim());
    for term in &terms {
        acc.add_scaled(term, 1.0);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Error bounds

/// `(2βt)^{K+1}/(K+1)!`: truncating the series after order `K`.
pub fn bound_duhamel(k_order: usize, t: f64, be_norm: f64) -> f64 {
    (2.0 * be_norm * t).powi(k_order as i32 + 1) / factorial(k_order + 1)
}

/// `8 e^{βt} (βt)^{K'+1}/(K'+1)!`: replacing `𝒦[e^{Jt}]` by `𝒥_{K'}`.
pub fn bound_taylor(kp: usize, t: f64, be_norm: f64) -> f64 {
    let bt = be_norm * t;
    8.0 * bt.exp() * bt.powi(kp as i32 + 1) / factorial(kp + 1)
}

/// Error of an order-`k` chain with every drift factor replaced by `𝒥_{K'}`.
pub fn bound_composite(k: usize, kp: usize, t: f64, be_norm: f64) -> f64 {
    8.0 * (be_norm * t).exp() * be_norm.powi(kp as i32 + 1) / factorial(kp + 1)
        * (2.0 * be_norm).powi(k as i32)
        * 2f64.powi(k as i32)
        * t.powi(kp as i32 + 1)
}

/// Nested-quadrature error of the order-`k` integral, with unit constant.
pub fn bound_quadrature(k: usize, q: usize, t: f64, be_norm: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (2.0 * t).powi(k as i32 - 1) * 2f64.powi(k as i32 + 1) * be_norm.powi(k as i32)
        * be_norm.powi(2 * q as i32)
        * t.powi(2 * q as i32 + 1)
        * q as f64
        / (factorial(k - 1) * factorial(2 * q))
}

/// `Σ_{k=1}^{K}` of [`bound_quadrature`].
pub fn quadrature_total_bound(k_order: usize, q: usize, t: f64, be_norm: f64) -> f64 {
    (1..=k_order).map(|k| bound_quadrature(k, q, t, be_norm)).sum()
}

/// `32 e^{5βt} β^{K'+2} t^{K'+2}/(K'+1)!`: the Taylor error summed over all `k ≥ 1` chains.
pub fn taylor_chain_bound(kp: usize, t: f64, be_norm: f64) -> f64 {
    let bt = be_norm * t;
    32.0 * (5.0 * bt).exp() * bt.powi(kp as i32 + 2) / factorial(kp + 1)
}

/// Taylor error of the whole approximant: the `A_0` term plus every chain.
pub fn taylor_total_bound(kp: usize, t: f64, be_norm: f64, has_jumps: bool) -> f64 {
    bound_taylor(kp, t, be_norm) + if has_jumps { taylor_chain_bound(kp, t, be_norm) } else { 0.0 }
}

// ---------------------------------------------------------------------------
// Truncation and segments

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Kp")]
    pub kp: usize,
    pub q: usize,
    pub segment_time: f64,
    pub num_segments: usize,
}

/// Smallest `(K, K', q)` whose error bounds each stay within `eps/3` on a segment of length `segment_t`.
pub fn choose_orders(model: &Lindbladian, segment_t: f64, eps: f64) -> Result<TruncationConfig> {
    choose_orders_for(model.be_norm(), model.num_jumps() > 0, segment_t, eps)
}

/// [`choose_orders`] from the be-norm alone.
pub fn choose_orders_for(beta: f64, has_jumps: bool, segment_t: f64, eps: f64) -> Result<TruncationConfig> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("precision must be positive, got {eps}")));
    }
    if !(segment_t >= 0.0) || !segment_t.is_finite() {
        return Err(Error::arg(format!("segment time must be nonnegative, got {segment_t}")));
    }
    let share = eps / 3.0;
    let infeasible = || Error::InfeasiblePrecision { eps, cap: ORDER_CAP };

    let k = if has_jumps {
        (0..=ORDER_CAP)
            .find(|&k| bound_duhamel(k, segment_t, beta) <= share)
            .ok_or_else(infeasible)?
    } else {
        0
    };
    let q = if k == 0 {
        1
    } else {
        (1..=ORDER_CAP)
            .find(|&q| quadrature_total_bound(k, q, segment_t, beta) <= share)
            .ok_or_else(infeasible)?
    };
    let bt = beta * segment_t;
    let kp = (0..=ORDER_CAP)
        .find(|&kp| {
            // Premise under which the truncated drift has norm at most 2.
            let premise = factorial(kp + 1) >= 8.0 * bt.exp() * bt.powi(kp as i32 + 1);
            premise && taylor_total_bound(kp, segment_t, beta, has_jumps) <= share
        })
        .ok_or_else(infeasible)?;
    Ok(TruncationConfig {
        k,
        kp,
        q,
        segment_time: segment_t,
        num_segments: 1,
    })
}

/// Which nested-weight total the success-probability budget assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SegmentBudget {
    /// `t^k/(k−1)!`, the larger value; yields shorter segments.
    #[default]
    Conservative,
    /// `t^k/k!`, the value the moment identities produce.
    Rederived,
}

/// Upper bound on the sum of squared Kraus normalizers for a segment of length `t`.
pub fn budget_expression(budget: SegmentBudget, be_norm: f64, jump_weight: f64, t: f64) -> f64 {
    let drift = (2.0 * be_norm * t).exp();
    match budget {
        SegmentBudget::Conservative => drift + t * jump_weight * drift * (t * jump_weight).exp(),
        SegmentBudget::Rederived => drift * (t * jump_weight).exp(),
    }
}

/// Largest segment length whose budget expression stays at most 2, or `None` for trivial dynamics.
pub fn budget_segment_time(model: &Lindbladian, budget: SegmentBudget) -> Option<f64> {
    budget_time_for(budget, model.be_norm(), model.jump_weight())
}

/// [`budget_segment_time`] from the be-norm and `Σα²`.
pub fn budget_time_for(budget: SegmentBudget, beta: f64, a2: f64) -> Option<f64> {
    if beta <= 0.0 {
        return None;
    }
    let f = |t: f64| budget_expression(budget, beta, a2, t);
    let mut lo = 0.0;
    let mut hi = 1.0 / beta;
    while f(hi) < 2.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Budgeted segment length, capped at the requested total time.
pub fn segment_time(model: &Lindbladian, requested_total: f64) -> f64 {
    match budget_segment_time(model, SegmentBudget::default()) {
        Some(t) => t.min(requested_total),
        None => requested_total,
    }
}

// ---------------------------------------------------------------------------
// Kraus form

/// One Kraus operator of the approximant together with its index in `𝓘`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausTerm {
    pub k: usize,
    /// `ℓ_1, …, ℓ_k`: jump applied at time `s_i`.
    pub jumps: Vec<usize>,
    /// `j_1, …, j_k`: quadrature index at level `i` (`j_k` is the outermost).
    pub nodes: Vec<usize>,
    /// `√(ŵ_{(j_k)} ⋯ ŵ_{(j_k,…,j_1)})`
    pub coefficient: f64,
    /// `coefficient · e^{βt} · α_{ℓ_k} ⋯ α_{ℓ_1}`
    pub normalizer: f64,
    pub matrix: CMatrix,
}

/// The completely positive approximant `Σ 𝒦[A_j]` of `e^{ℒt}` on one segment.
///
/// Kraus operators are produced on demand from their index, so even very large
/// term sets never have to be stored.
#[derive(Debug, Clone)]
pub struct CPMapApprox {
    model: Lindbladian,
    t: f64,
    k: usize,
    kp: usize,
    q: usize,
    rule: Option<QuadratureRule>,
    /// `offsets[k]` = index of the first term of order `k`.
    offsets: Vec<usize>,
    len: usize,
}

/// Number of Kraus operators, `1 + Σ_{k=1}^{K} (mq)^k`.
pub fn kraus_term_count(m: usize, q: usize, k_order: usize) -> f64 {
    1.0 + (1..=k_order).map(|k| ((m * q) as f64).powi(k as i32)).sum::<f64>()
}

/// Builds the Kraus form for `(K, K', q)` on a segment of length `t`.
pub fn enumerate_kraus(model: &Lindbladian, t: f64, cfg: &TruncationConfig) -> Result<CPMapApprox> {
    let count = kraus_term_count(model.num_jumps(), cfg.q, cfg.k);
    if count > MAX_TUPLES {
        return Err(Error::ResourceLimit {
            what: "Kraus enumeration",
            requested: count,
            limit: MAX_TUPLES,
        });
    }
    CPMapApprox::build(model, t, cfg.k, cfg.kp, cfg.q)
}

impl CPMapApprox {
    pub(crate) fn build(model: &Lindbladian, t: f64, k: usize, kp: usize, q: usize) -> Result<Self> {
        check_times(t, &[])?;
        let m = model.num_jumps();
        let k = if m == 0 { 0 } else { k };
        let rule = if k > 0 && t > 0.0 {
            Some(quadrature::canonical_rule(q, t)?)
        } else {
            None
        };
        let k = if rule.is_none() { 0 } else { k };
        let mut offsets = vec![0usize, 1];
        let mut len = 1usize;
        for order in 1..=k {
            let block = (m * q)
                .checked_pow(order as u32)
                .ok_or(Error::ResourceLimit {
                    what: "Kraus enumeration",
                    requested: kraus_term_count(m, q, k),
                    limit: usize::MAX as f64,
                })?;
            len = len.checked_add(block).ok_or(Error::ResourceLimit {
                what: "Kraus enumeration",
                requested: kraus_term_count(m, q, k),
                limit: usize::MAX as f64,
            })?;
            offsets.push(len);
        }
        Ok(Self {
            model: model.clone(),
            t,
            k,
            kp,
            q,
            rule,
            offsets,
            len,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn model(&self) -> &Lindbladian {
        &self.model
    }

    pub fn orders(&self) -> (usize, usize, usize) {
        (self.k, self.kp, self.q)
    }

    pub fn rule(&self) -> Option<&QuadratureRule> {
        self.rule.as_ref()
    }

    /// `(k, ℓ_1..ℓ_k, j_1..j_k)` for a linear index.
    ///
    /// Order `k` ascending, then the quadrature tuple lexicographic in
    /// `(j_k, …, j_1)`, then the jump tuple lexicographic in `(ℓ_k, …, ℓ_1)`.
    pub fn term_index(&self, index: usize) -> (usize, Vec<usize>, Vec<usize>) {
        assert!(index < self.len, "term index out of range");
        if index == 0 {
            return (0, vec![], vec![]);
        }
        let k = self.offsets.partition_point(|&o| o <= index) - 1;
        let local = index - self.offsets[k];
        let m = self.model.num_jumps();
        let mk = m.pow(k as u32);
        let (mut jpart, mut lpart) = (local / mk, local % mk);
        let mut nodes = vec![0; k];
        let mut jumps = vec![0; k];
        // Least significant digit is level 1.
        for i in 0..k {
            nodes[i] = jpart % self.q;
            jpart /= self.q;
            jumps[i] = lpart % m;
            lpart /= m;
        }
        (k, jumps, nodes)
    }

    /// Descending node times `s_k ≥ … ≥ s_1` and ŵ weights for level indices `j_1..j_k`.
    fn nested_point(&self, nodes: &[usize]) -> (Vec<f64>, f64) {
        let rule = self.rule.as_ref().expect("k > 0 requires a quadrature rule");
        let mut x = self.t;
        let mut times = Vec::with_capacity(nodes.len());
        let mut wprod = 1.0;
        for &j in nodes.iter().rev() {
            wprod *= rule.scaled_weight(j, x);
            x = rule.scaled_node(j, x);
            times.push(x);
        }
        (times, wprod)
    }

    fn coefficient_and_times(&self, nodes: &[usize]) -> (f64, Vec<f64>) {
        if nodes.is_empty() {
            return (1.0, vec![]);
        }
        let (times, w) = self.nested_point(nodes);
        (w.sqrt(), times)
    }

    pub fn normalizer_of(&self, jumps: &[usize], coefficient: f64) -> f64 {
        let alphas = self.model.alphas();
        coefficient * (self.model.be_norm() * self.t).exp() * jumps.iter().map(|&l| alphas[l]).product::<f64>()
    }

    /// Normalizer `s_j` of term `index`, without building its matrix.
    pub fn normalizer(&self, index: usize) -> f64 {
        let (_, jumps, nodes) = self.term_index(index);
        let (coef, _) = self.coefficient_and_times(&nodes);
        self.normalizer_of(&jumps, coef)
    }

    pub fn term(&self, index: usize) -> KrausTerm {
        let (k, jumps, nodes) = self.term_index(index);
        let (coefficient, times) = self.coefficient_and_times(&nodes);
        let g = self.model.effective_generator();
        let drift = |s: f64| linalg::taylor_exp(&g, s, self.kp);
        // times = [s_k, …, s_1]
        let mut matrix = drift(self.t - times.first().copied().unwrap_or(0.0));
        for (level, &s) in times.iter().enumerate() {
            let i = k - 1 - level; // position of ℓ_i for time s_i
            let next = times.get(level + 1).copied().unwrap_or(0.0);
            matrix = matrix * &self.model.jumps()[jumps[i]] * drift(s - next);
        }
        matrix *= c(coefficient, 0.0);
        let normalizer = self.normalizer_of(&jumps, coefficient);
        KrausTerm {
            k,
            jumps,
            nodes,
            coefficient,
            normalizer,
            matrix,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = KrausTerm> + '_ {
        (0..self.len).map(move |i| self.term(i))
    }

    /// `Σ_j 𝒦[A_j]` by the memoized recursion with Taylor drift.
    pub fn as_superoperator(&self) -> Result<Superoperator> {
        g_k_factorized(&self.model, self.t, self.k, self.q, DriftKind::Taylor(self.kp))
    }

    /// `Σ_j 𝒦[A_j]` by materializing every Kraus operator (parallel, tree-reduced).
    pub fn superoperator_from_terms(&self) -> Result<Superoperator> {
        if self.len as f64 > MAX_TUPLES {
            return Err(Error::ResourceLimit {
                what: "Kraus enumeration",
                requested: self.len as f64,
                limit: MAX_TUPLES,
            });
        }
        Ok(par::chunked_reduce(
            self.len,
            par::DEFAULT_CHUNK,
            |range| {
                let mut local = Superoperator::zeros(self.dim());
                for i in range {
                    local.add_scaled(&Superoperator::kraus(&self.term(i).matrix), 1.0);
                }
                local
            },
            |a, b| &a + &b,
        )
        .unwrap_or_else(|| Superoperator::zeros(self.dim())))
    }
}

/// `Σ_j s_j²` by enumerating every term.
pub fn normalizer_sum_squares(cp: &CPMapApprox) -> f64 {
    par::chunked_reduce(
        cp.len(),
        4096,
        |range| range.map(|i| cp.normalizer(i).powi(2)).collect::<CompensatedSum>(),
        CompensatedSum::merge,
    )
    .map(|s| s.value())
    .unwrap_or(0.0)
}

/// Nested weight totals `W_k` for `k = 0..=k_order` from the moment chain
/// `W_k = Π_{i<k} (Σ_j w_j ŝ_j^i) / t^{k(k−1)/2}`.
pub fn nested_weight_totals(rule: &QuadratureRule, k_order: usize) -> Vec<f64> {
    let t = rule.interval_length;
    let mut out = vec![1.0];
    let mut acc = 1.0;
    for i in 0..k_order {
        acc *= rule.moment(i) / t.powi(i as i32);
        out.push(acc);
    }
    out
}

/// `e^{2βt} Σ_{k=0}^{K} (Σα²)^k W_k`.
pub fn normalizer_sum_squares_closed_form(model: &Lindbladian, t: f64, k_order: usize, q: usize) -> Result<f64> {
    let drift = (2.0 * model.be_norm() * t).exp();
    if k_order == 0 || model.num_jumps() == 0 || t == 0.0 {
        return Ok(drift);
    }
    let rule = quadrature::canonical_rule(q, t)?;
    let a2 = model.jump_weight();
    Ok(drift
        * nested_weight_totals(&rule, k_order)
            .iter()
            .enumerate()
            .map(|(k, w)| a2.powi(k as i32) * w)
            .sum::<f64>())
}

// ---------------------------------------------------------------------------
// End-to-end simulation

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationOptions {
    pub budget: SegmentBudget,
    /// Compare against the exact channel and report the Choi lower-bound error.
    pub verify: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub segments: usize,
    pub segment_time: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Kp")]
    pub kp: usize,
    pub q: usize,
    pub kraus_terms: f64,
    pub bound_duhamel: f64,
    pub bound_quadrature: f64,
    pub bound_taylor: f64,
    pub normalizer_sum_squares: f64,
    pub total_error_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_choi_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub rho: CMatrix,
    pub report: SimulationReport,
    /// The composed approximant over the whole time span.
    pub channel: Superoperator,
}

pub const STATE_TOL: f64 = 1e-9;

/// Checks that `rho` is a density matrix of dimension `dim`.
pub fn validate_density_matrix(rho: &CMatrix, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho.nrows(),
        });
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::arg("density matrix has non-finite entries"));
    }
    if linalg::hermiticity_residual(rho) > STATE_TOL {
        return Err(Error::arg("density matrix is not Hermitian"));
    }
    let tr = linalg::trace(rho);
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::arg(format!("density matrix trace is {tr}, expected 1")));
    }
    let min = linalg::hermitian_eigenvalues(rho)[0];
    if min < -STATE_TOL {
        return Err(Error::arg(format!("density matrix has negative eigenvalue {min:e}")));
    }
    Ok(())
}

pub fn simulate(model: &Lindbladian, rho0: &CMatrix, t: f64, eps: f64) -> Result<Simulation> {
    simulate_with(model, rho0, t, eps, SimulationOptions::default())
}

pub fn simulate_with(
    model: &Lindbladian,
    rho0: &CMatrix,
    t: f64,
    eps: f64,
    opts: SimulationOptions,
) -> Result<Simulation> {
    validate_density_matrix(rho0, model.dim())?;
    if !(eps > 0.0) {
        return Err(Error::arg(format!("precision must be positive, got {eps}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::arg(format!("evolution time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(Simulation {
            rho: rho0.clone(),
            report: SimulationReport {
                segments: 0,
                segment_time: 0.0,
                k: 0,
                kp: 0,
                q: 1,
                kraus_terms: 1.0,
                bound_duhamel: 0.0,
                bound_quadrature: 0.0,
                bound_taylor: 0.0,
                normalizer_sum_squares: 1.0,
                total_error_bound: 0.0,
                measured_choi_error: opts.verify.then_some(0.0),
            },
            channel: Superoperator::identity(model.dim()),
        });
    }
    let max_segment = budget_segment_time(model, opts.budget).unwrap_or(t);
    let segments = ((t / max_segment).ceil() as usize).max(1);
    let seg = t / segments as f64;
    let cfg = TruncationConfig {
        num_segments: segments,
        ..choose_orders(model, seg, eps / segments as f64)?
    };
    let cp = CPMapApprox::build(model, seg, cfg.k, cfg.kp, cfg.q)?;
    let step = cp.as_superoperator()?;
    let channel = step.powi(segments);
    let rho = channel.apply(rho0);

    let beta = model.be_norm();
    let has_jumps = model.num_jumps() > 0;
    let (k, kp, q) = cp.orders();
    let bound_duhamel = if has_jumps { bound_duhamel(k, seg, beta) } else { 0.0 };
    let bound_quadrature = quadrature_total_bound(k, q, seg, beta);
    let bound_taylor = taylor_total_bound(kp, seg, beta, has_jumps);
    let measured_choi_error = if opts.verify {
        Some(channel::choi_distance(&channel, &model.exact_channel(t)?))
    } else {
        None
    };
    let report = SimulationReport {
        segments,
        segment_time: seg,
        k,
        kp,
        q,
        kraus_terms: kraus_term_count(model.num_jumps(), q, k),
        bound_duhamel,
        bound_quadrature,
        bound_taylor,
        normalizer_sum_squares: normalizer_sum_squares_closed_form(model, seg, k, q)?,
        total_error_bound: segments as f64 * (bound_duhamel + bound_quadrature + bound_taylor),
        measured_choi_error,
    };
    Ok(Simulation { rho, report, channel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ONE, ZERO};

    fn amplitude_damping(gamma: f64) -> Lindbladian {
        let l = CMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt(), 0.0), ZERO, ZERO]);
        Lindbladian::new(CMatrix::zeros(2, 2), vec![l]).unwrap()
    }

    #[test]
    fn f_k_order_zero_is_drift_semigroup() {
        let m = amplitude_damping(1.0);
        let f = f_k(&m, 0.7, &[]).unwrap();
        assert!(f.max_abs_diff(&m.drift_semigroup(0.7).unwrap()) < 1e-15);
    }

    #[test]
    fn f_k_rejects_unordered_times() {
        let m = amplitude_damping(1.0);
        assert!(f_k(&m, 1.0, &[0.5, 0.2]).is_err());
        assert!(f_k(&m, 1.0, &[0.5, 1.2]).is_err());
        assert!(f_k(&m, 1.0, &[-0.1]).is_err());
    }

    #[test]
    fn f_k_vanishes_without_jumps() {
        let z = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let m = Lindbladian::new(z, vec![]).unwrap();
        let f = f_k(&m, 1.0, &[0.4]).unwrap();
        assert_eq!(linalg::max_abs(f.matrix()), 0.0);
    }

    #[test]
    fn bound_plug_ins() {
        assert!((bound_duhamel(3, 1.0, 0.5) - 1.0 / 24.0).abs() < 1e-16);
        assert!((bound_duhamel(0, 1.0, 0.5) - 1.0).abs() < 1e-16);
        assert!((bound_taylor(0, 1.0, 1.0) - 8.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((bound_taylor(9, 1.0, 0.5) - 3.5495e-9).abs() < 1e-12);
        assert!((bound_composite(0, 4, 0.5, 1.0) - bound_taylor(4, 0.5, 1.0)).abs() < 1e-16);
    }

    #[test]
    fn term_count_formula() {
        let m = amplitude_damping(1.0);
        let cfg = TruncationConfig {
            k: 1,
            kp: 3,
            q: 2,
            segment_time: 0.3,
            num_segments: 1,
        };
        assert_eq!(enumerate_kraus(&m, 0.3, &cfg).unwrap().len(), 3);
        let cfg0 = TruncationConfig { k: 0, ..cfg };
        assert_eq!(enumerate_kraus(&m, 0.3, &cfg0).unwrap().len(), 1);
        assert_eq!(kraus_term_count(2, 3, 2), 1.0 + 6.0 + 36.0);
    }

    #[test]
    fn kraus_guardrail() {
        let m = amplitude_damping(1.0);
        let cfg = TruncationConfig {
            k: 30,
            kp: 3,
            q: 8,
            segment_time: 0.3,
            num_segments: 1,
        };
        assert!(matches!(enumerate_kraus(&m, 0.3, &cfg), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn segment_time_is_trivial_for_zero_norm() {
        let m = Lindbladian::new(CMatrix::zeros(2, 2), vec![]).unwrap();
        assert_eq!(budget_segment_time(&m, SegmentBudget::Conservative), None);
        assert_eq!(segment_time(&m, 4.5), 4.5);
    }

    #[test]
    fn choose_orders_rejects_bad_precision() {
        let m = amplitude_damping(1.0);
        assert!(choose_orders(&m, 0.2, 0.0).is_err());
        assert!(matches!(
            choose_orders(&m, 0.2, 1e-300),
            Err(Error::InfeasiblePrecision { .. })
        ));
    }

    #[test]
    fn simulate_rejects_invalid_states() {
        let m = amplitude_damping(1.0);
        let bad = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), ZERO, ZERO, c(-1.0, 0.0)]);
        assert!(simulate(&m, &bad, 1.0, 1e-3).is_err());
        let wrong_dim = linalg::identity(3) * c(1.0 / 3.0, 0.0);
        assert!(simulate(&m, &wrong_dim, 1.0, 1e-3).is_err());
    }
}
