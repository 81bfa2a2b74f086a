//! Gauss–Legendre rules on `[0, t]` and the nested, rescaled grids that
//! discretize simplex-ordered multiple integrals `∫_{0≤s₁≤…≤s_k≤t}`.
//!
//! A nested grid of depth `k` is indexed by tuples `(j_k, …, j_1)`. The outermost
//! node is the canonical node `ŝ_{j_k}`; every further level rescales the rule onto
//! `[0, x]`, where `x` is the node one level up:
//!
//! ```text
//! u_j(x) = x ŝ_j / t      (node)
//! v_j(x) = x w_j / t      (weight)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{factorial, CompensatedSum};
use crate::par;

pub const MAX_ORDER: usize = 64;
/// Upper bound on the number of tuples any nested enumeration may visit.
pub const MAX_TUPLES: f64 = 1e8;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `(P_q(x), P_{q-1}(x))` by the three-term recurrence.
pub fn legendre_pair(q: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return (1.0, 0.0);
    }
    for n in 1..q {
        let n = n as f64;
        let next = ((2.0 * n + 1.0) * x * cur - n * prev) / (n + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn legendre_derivative(q: usize, x: f64, pq: f64, pq1: f64) -> f64 {
    q as f64 * (x * pq - pq1) / (x * x - 1.0)
}

pub fn legendre_rule(q: usize) -> Result<LegendreRule> {
    if q == 0 || q > MAX_ORDER {
        return Err(Error::arg(format!("quadrature order must be in 1..={MAX_ORDER}, got {q}")));
    }
    let mut pos_nodes = Vec::with_capacity(q / 2 + 1);
    let mut pos_weights = Vec::with_capacity(q / 2 + 1);
    for i in 0..q / 2 {
        // Chebyshev-angle seed for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p1) = legendre_pair(q, x);
            let dx = p / legendre_derivative(q, x, p, p1);
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (p, p1) = legendre_pair(q, x);
        let dp = legendre_derivative(q, x, p, p1);
        pos_nodes.push(x);
        pos_weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    let mut nodes: Vec<f64> = pos_nodes.iter().map(|x| -x).collect();
    let mut weights = pos_weights.clone();
    if q % 2 == 1 {
        let (_, p1) = legendre_pair(q, 0.0);
        // P_q'(0) = q P_{q-1}(0) for odd q.
        let dp = q as f64 * p1;
        nodes.push(0.0);
        weights.push(2.0 / (dp * dp));
    }
    nodes.extend(pos_nodes.iter().rev());
    weights.extend(pos_weights.iter().rev());
    Ok(LegendreRule { nodes, weights })
}

/// A Gauss–Legendre rule mapped onto `[0, t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub order: usize,
    pub interval_length: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn canonical_rule(q: usize, t: f64) -> Result<QuadratureRule> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::arg(format!("interval length must be positive, got {t}")));
    }
    let base = legendre_rule(q)?;
    Ok(QuadratureRule {
        order: q,
        interval_length: t,
        nodes: base.nodes.iter().map(|x| t * (x + 1.0) / 2.0).collect(),
        weights: base.weights.iter().map(|v| t * v / 2.0).collect(),
    })
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .collect::<CompensatedSum>()
            .value()
    }

    /// `Σ_j w_j ŝ_j^ℓ`
    pub fn moment(&self, ell: usize) -> f64 {
        self.integrate(|x| x.powi(ell as i32))
    }

    /// `u_j(x) = x ŝ_j / t`
    pub fn scaled_node(&self, j: usize, x: f64) -> f64 {
        x * self.nodes[j] / self.interval_length
    }

    /// `v_j(x) = x w_j / t`
    pub fn scaled_weight(&self, j: usize, x: f64) -> f64 {
        x * self.weights[j] / self.interval_length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub q: usize,
    pub t: f64,
    pub ell: usize,
    pub moment_lhs: f64,
    pub moment_rhs: f64,
    pub residual: f64,
}

/// `Σ_j w_j ŝ_j^ℓ` against `t^{ℓ+1}/(ℓ+1)` for `0 ≤ ℓ ≤ 2q−1`.
pub fn moment_table(q: usize, t: f64) -> Result<Vec<MomentRow>> {
    let rule = canonical_rule(q, t)?;
    Ok((0..2 * q)
        .map(|ell| {
            let lhs = rule.moment(ell);
            let rhs = t.powi(ell as i32 + 1) / (ell as f64 + 1.0);
            MomentRow {
                q,
                t,
                ell,
                moment_lhs: lhs,
                moment_rhs: rhs,
                residual: lhs - rhs,
            }
        })
        .collect())
}

/// One tuple of a [`NestedGrid`], outermost level first.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedPoint {
    /// `(j_k, …, j_1)`
    pub indices: Vec<usize>,
    /// `x̂_{(j_k)} ≥ x̂_{(j_k,j_{k−1})} ≥ … ≥ x̂_{(j_k,…,j_1)}`
    pub nodes: Vec<f64>,
    /// `ŵ_{(j_k)}, ŵ_{(j_k,j_{k−1})}, …`
    pub weights: Vec<f64>,
}

impl NestedPoint {
    pub fn weight_product(&self) -> f64 {
        self.weights.iter().product()
    }

    /// Times in ascending order `s_1 ≤ … ≤ s_k`.
    pub fn ascending_times(&self) -> Vec<f64> {
        self.nodes.iter().rev().copied().collect()
    }
}

/// All `q^k` tuples of scaled nodes and weights for a depth-`k` simplex integral on `[0, t]`.
///
/// Tuples are produced lazily in lexicographic order over `(j_k, …, j_1)`; any
/// tuple can also be reached by its linear index, which is how work is split
/// across threads.
#[derive(Debug, Clone)]
pub struct NestedGrid {
    rule: QuadratureRule,
    depth: usize,
    len: usize,
}

pub fn nested_grid(k: usize, q: usize, t: f64) -> Result<NestedGrid> {
    NestedGrid::new(k, canonical_rule(q, t)?)
}

impl NestedGrid {
    pub fn new(depth: usize, rule: QuadratureRule) -> Result<Self> {
        if depth == 0 {
            return Err(Error::arg("nested grid depth must be at least 1"));
        }
        let count = (rule.order as f64).powi(depth as i32);
        if count > MAX_TUPLES {
            return Err(Error::ResourceLimit {
                what: "nested quadrature grid",
                requested: count,
                limit: MAX_TUPLES,
            });
        }
        Ok(Self {
            len: rule.order.pow(depth as u32),
            rule,
            depth,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(j_k, …, j_1)` for a linear index, `j_k` most significant.
    pub fn indices(&self, mut index: usize) -> Vec<usize> {
        let q = self.rule.order;
        let mut out = vec![0; self.depth];
        for slot in out.iter_mut().rev() {
            *slot = index % q;
            index /= q;
        }
        out
    }

    pub fn point_from_indices(&self, indices: Vec<usize>) -> NestedPoint {
        let mut nodes = Vec::with_capacity(self.depth);
        let mut weights = Vec::with_capacity(self.depth);
        let mut x = self.rule.interval_length;
        for &j in &indices {
            weights.push(self.rule.scaled_weight(j, x));
            x = self.rule.scaled_node(j, x);
            nodes.push(x);
        }
        NestedPoint {
            indices,
            nodes,
            weights,
        }
    }

    pub fn point(&self, index: usize) -> NestedPoint {
        self.point_from_indices(self.indices(index))
    }

    pub fn iter(&self) -> impl Iterator<Item = NestedPoint> + '_ {
        (0..self.len).map(move |i| self.point(i))
    }

    /// Σ over tuples of the weight products, with compensated accumulation.
    pub fn weight_total(&self) -> f64 {
        par::chunked_reduce(
            self.len,
            4096,
            |range| {
                range
                    .map(|i| self.point(i).weight_product())
                    .collect::<CompensatedSum>()
            },
            CompensatedSum::merge,
        )
        .map(|s| s.value())
        .unwrap_or(0.0)
    }
}

/// `Σ_{j_k…j_1} ŵ_{(j_k)} ⋯ ŵ_{(j_k,…,j_1)}`, which equals `t^k/k!` whenever `q ≥ ⌈k/2⌉`.
pub fn nested_weight_sum(k: usize, q: usize, t: f64) -> Result<f64> {
    Ok(nested_grid(k, q, t)?.weight_total())
}

/// Simplex volume `t^k/k!`.
pub fn simplex_volume(k: usize, t: f64) -> f64 {
    t.powi(k as i32) / factorial(k)
}

/// `f2q_bound · t^{2q+1} q / ((2q)! 2^{4q−1})`, the explicit single-integral Gauss error bound.
pub fn quadrature_error_bound(q: usize, t: f64, f2q_bound: f64) -> f64 {
    let q_f = q as f64;
    f2q_bound * t.powi(2 * q as i32 + 1) * q_f / (factorial(2 * q) * 2f64.powi(4 * q as i32 - 1))
}
