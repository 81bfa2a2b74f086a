//! Time-dependent Lindbladians: time-ordered drift propagators from a truncated,
//! discretized Dyson series, and the series simulation built on them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::duhamel::{
    self, bound_duhamel, check_recursion_budget, choose_orders_for, quadrature_total_bound, validate_density_matrix,
    SegmentBudget, SeriesOps,
};
use crate::error::{Error, Result};
use crate::linalg::{self, c, factorial, CMatrix, ONE, ZERO};
use crate::model::{be_norm, effective_generator, jump_superoperator, Lindbladian, NormalizingFactors, HERMITICITY_TOL};
use crate::quadrature;
use crate::superop::Superoperator;

/// Time → `(H(t), [L_1(t), …, L_m(t)])`. Must be pure in its argument.
pub type Sampler = Arc<dyn Fn(f64) -> (CMatrix, Vec<CMatrix>) + Send + Sync>;

#[derive(Clone)]
pub struct TimeDependentLindbladian {
    sampler: Sampler,
    dim: usize,
    num_jumps: usize,
    alpha0: f64,
    alphas: Vec<f64>,
    jdot_bound: f64,
}

impl fmt::Debug for TimeDependentLindbladian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeDependentLindbladian")
            .field("dim", &self.dim)
            .field("num_jumps", &self.num_jumps)
            .field("alpha0", &self.alpha0)
            .field("alphas", &self.alphas)
            .field("jdot_bound", &self.jdot_bound)
            .finish_non_exhaustive()
    }
}

impl TimeDependentLindbladian {
    /// `factors` are sup-norm bounds over the horizon and `jdot_bound` bounds `‖dJ/dt‖`.
    pub fn new(sampler: Sampler, factors: NormalizingFactors, jdot_bound: f64) -> Result<Self> {
        if !(jdot_bound >= 0.0) || !jdot_bound.is_finite() {
            return Err(Error::arg(format!("derivative bound must be nonnegative, got {jdot_bound}")));
        }
        let (h, jumps) = sampler(0.0);
        let tl = Self {
            dim: h.nrows(),
            num_jumps: jumps.len(),
            alpha0: factors.alpha0,
            alphas: factors.alphas,
            sampler,
            jdot_bound,
        };
        if tl.alphas.len() != tl.num_jumps {
            return Err(Error::DimensionMismatch {
                expected: tl.num_jumps,
                found: tl.alphas.len(),
            });
        }
        tl.sample(0.0)?;
        Ok(tl)
    }

    /// Time-independent family, for degeneration checks.
    pub fn constant(model: &Lindbladian) -> Self {
        let h = model.hamiltonian().clone();
        let jumps = model.jumps().to_vec();
        Self {
            dim: model.dim(),
            num_jumps: model.num_jumps(),
            alpha0: model.alpha0(),
            alphas: model.alphas().to_vec(),
            jdot_bound: 0.0,
            sampler: Arc::new(move |_| (h.clone(), jumps.clone())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_jumps(&self) -> usize {
        self.num_jumps
    }

    pub fn be_norm(&self) -> f64 {
        be_norm(self.alpha0, &self.alphas)
    }

    pub fn jump_weight(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }

    pub fn jdot_bound(&self) -> f64 {
        self.jdot_bound
    }

    /// The frozen Lindbladian at time `t`, checked against the declared bounds.
    pub fn sample(&self, t: f64) -> Result<Lindbladian> {
        let (h, jumps) = (self.sampler)(t);
        if h.nrows() != self.dim || jumps.len() != self.num_jumps {
            return Err(Error::model(format!("sampler changed shape at t = {t}")));
        }
        let scale = linalg::max_abs(&h).max(1.0);
        if linalg::hermiticity_residual(&h) > HERMITICITY_TOL * scale {
            return Err(Error::model(format!("Hamiltonian is not Hermitian at t = {t}")));
        }
        Lindbladian::with_factors(
            h,
            jumps,
            NormalizingFactors {
                alpha0: self.alpha0,
                alphas: self.alphas.clone(),
            },
        )
        .map_err(|e| Error::model(format!("at t = {t}: {e}")))
    }

    pub fn effective_generator(&self, t: f64) -> Result<CMatrix> {
        Ok(self.sample(t)?.effective_generator())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DysonConfig {
    /// Truncation order; `None` picks the Taylor order the time-independent pipeline would use.
    pub order: Option<usize>,
    /// Grid points per propagated interval.
    pub grid: usize,
}

impl DysonConfig {
    pub fn new(order: usize, grid: usize) -> Self {
        Self {
            order: Some(order),
            grid,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::arg("Dyson grid needs at least one point"));
        }
        Ok(())
    }
}

/// Degree-`order` truncation of `Π_{i=M−1}^{0} e^{h J(t_i)}` on the left-endpoint
/// grid `t_i = s + i h`, `h = (t − s)/M`.
///
/// Expanding the product and keeping total degree `≤ order` gives the discretized
/// Dyson sum `Σ_k (h^k/k!) Σ_{i_1..i_k} 𝒯[J(t_{i_k}) ⋯ J(t_{i_1})]`.
pub fn ordered_propagator(tl: &TimeDependentLindbladian, s: f64, t: f64, order: usize, grid: usize) -> Result<CMatrix> {
    if !(s <= t) {
        return Err(Error::arg(format!("propagator needs s ≤ t, got s = {s}, t = {t}")));
    }
    DysonConfig::new(order, grid).validate()?;
    propagate(tl, s, t, order, grid, |x| tl.effective_generator(x))
}

fn propagate(
    tl: &TimeDependentLindbladian,
    s: f64,
    t: f64,
    order: usize,
    grid: usize,
    generator: impl Fn(f64) -> Result<CMatrix>,
) -> Result<CMatrix> {
    let d = tl.dim();
    let h = (t - s) / grid as f64;
    // parts[k] = homogeneous degree-k part of the running product
    let mut parts = vec![CMatrix::zeros(d, d); order + 1];
    parts[0] = linalg::identity(d);
    if h == 0.0 {
        return Ok(parts.swap_remove(0));
    }
    let mut powers = vec![linalg::identity(d); order + 1];
    for i in 0..grid {
        let step = generator(s + i as f64 * h)? * c(h, 0.0);
        // powers[r] = step^r / r!
        for r in 1..=order {
            let (lo, hi) = powers.split_at_mut(r);
            linalg::mul_acc(&mut hi[0], c(1.0 / r as f64, 0.0), &step, &lo[r - 1], ZERO);
        }
        // Highest degree first, so parts[k − r] with r ≥ 1 is still the old value.
        for k in (1..=order).rev() {
            let (lo, hi) = parts.split_at_mut(k);
            for r in 1..=k {
                linalg::mul_acc(&mut hi[0], ONE, &powers[r], &lo[k - r], ONE);
            }
        }
    }
    Ok(parts.into_iter().fold(CMatrix::zeros(d, d), |acc, p| acc + p))
}

/// `‖J‖^{K+1}Δ^{K+1}/(K+1)! + Δ²‖J̇‖/M` with `‖J‖ ≤ β`.
pub fn dyson_error_estimate(tl: &TimeDependentLindbladian, delta: f64, order: usize, grid: usize) -> f64 {
    let bd = tl.be_norm() * delta;
    bd.powi(order as i32 + 1) / factorial(order + 1) + delta * delta * tl.jdot_bound() / grid as f64
}

struct DysonOps<'a> {
    tl: &'a TimeDependentLindbladian,
    offset: f64,
    order: usize,
    grid: usize,
}

impl SeriesOps for DysonOps<'_> {
    fn drift(&self, from: f64, to: f64) -> Superoperator {
        // Bounds were validated on the segment grid before assembly.
        let raw = |x: f64| {
            let (h, jumps) = (self.tl.sampler)(x);
            Ok(effective_generator(&h, &jumps))
        };
        let v = propagate(self.tl, self.offset + from, self.offset + to, self.order, self.grid, raw)
            .expect("unchecked sampling cannot fail");
        Superoperator::kraus(&v)
    }

    fn jump(&self, at: f64) -> Superoperator {
        let (_, jumps) = (self.tl.sampler)(self.offset + at);
        jump_superoperator(&jumps, self.tl.dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdSimulationReport {
    pub segments: usize,
    pub segment_time: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Kd")]
    pub dyson_order: usize,
    pub q: usize,
    pub grid: usize,
    pub bound_duhamel: f64,
    pub bound_quadrature: f64,
    pub dyson_error_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct TdSimulation {
    pub rho: CMatrix,
    pub report: TdSimulationReport,
    pub channel: Superoperator,
}

/// Series simulation with time-ordered drift propagators and jump superoperators
/// sampled at the absolute quadrature times.
/// Equal segments no longer than the success-probability budget allows.
fn segmentation(tl: &TimeDependentLindbladian, t: f64) -> (usize, f64) {
    let max_segment = duhamel::budget_time_for(SegmentBudget::default(), tl.be_norm(), tl.jump_weight()).unwrap_or(t);
    let segments = if t == 0.0 { 0 } else { ((t / max_segment).ceil() as usize).max(1) };
    let seg = if segments == 0 { 0.0 } else { t / segments as f64 };
    (segments, seg)
}

/// Largest grid [`grid_for_precision`] will propose.
pub const MAX_AUTO_GRID: usize = 20_000;

/// Smallest grid whose discretization term `Δ²‖J̇‖/M`, summed over the segments
/// [`td_simulate`] would use, stays within `eps/3`.
pub fn grid_for_precision(tl: &TimeDependentLindbladian, t: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("precision must be positive, got {eps}")));
    }
    let (segments, seg) = segmentation(tl, t);
    let needed = (3.0 * segments as f64 * seg * seg * tl.jdot_bound() / eps).ceil().max(1.0);
    if needed > MAX_AUTO_GRID as f64 {
        return Err(Error::InfeasiblePrecision {
            eps,
            cap: MAX_AUTO_GRID,
        });
    }
    Ok(needed as usize)
}

pub fn td_simulate(
    tl: &TimeDependentLindbladian,
    rho0: &CMatrix,
    t: f64,
    eps: f64,
    cfg: DysonConfig,
) -> Result<TdSimulation> {
    validate_density_matrix(rho0, tl.dim())?;
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::arg(format!("precision must be positive, got {eps}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::arg(format!("evolution time must be nonnegative, got {t}")));
    }
    let beta = tl.be_norm();
    let (segments, seg) = segmentation(tl, t);
    let orders = choose_orders_for(beta, tl.num_jumps() > 0, seg, eps / segments.max(1) as f64)?;
    let order = cfg.order.unwrap_or(orders.kp);
    let (k, q) = (orders.k, orders.q);
    if k > 0 {
        check_recursion_budget(k, q)?;
    }

    let mut channel = Superoperator::identity(tl.dim());
    for i in 0..segments {
        let ops = DysonOps {
            tl,
            offset: i as f64 * seg,
            order,
            grid: cfg.grid,
        };
        // Validate the bounds at every grid time this segment will touch.
        for g in 0..=cfg.grid {
            tl.sample(ops.offset + seg * g as f64 / cfg.grid as f64)?;
        }
        let step = if k == 0 {
            ops.drift(0.0, seg)
        } else {
            let rule = quadrature::canonical_rule(q, seg)?;
            duhamel::factorized_series(&ops, &rule, k)
        };
        channel = step.compose(&channel);
    }
    let has_jumps = tl.num_jumps() > 0;
    let report = TdSimulationReport {
        segments,
        segment_time: seg,
        k,
        dyson_order: order,
        q,
        grid: cfg.grid,
        bound_duhamel: if has_jumps { bound_duhamel(k, seg, beta) } else { 0.0 },
        bound_quadrature: quadrature_total_bound(k, q, seg, beta),
        dyson_error_estimate: dyson_error_estimate(tl, seg, order, cfg.grid),
    };
    Ok(TdSimulation {
        rho: channel.apply(rho0),
        report,
        channel,
    })
}

/// Classical fourth-order Runge–Kutta on `dρ/dt = ℒ(t)ρ` with a fixed number of steps.
pub fn integrate_rk4(tl: &TimeDependentLindbladian, rho0: &CMatrix, t: f64, steps: usize) -> Result<CMatrix> {
    if steps == 0 {
        return Err(Error::arg("need at least one integration step"));
    }
    let h = t / steps as f64;
    let rhs = |time: f64, rho: &CMatrix| -> Result<CMatrix> { Ok(tl.sample(time)?.apply(rho)) };
    let mut rho = rho0.clone();
    for i in 0..steps {
        let s = i as f64 * h;
        let k1 = rhs(s, &rho)?;
        let k2 = rhs(s + h / 2.0, &(&rho + &k1 * c(h / 2.0, 0.0)))?;
        let k3 = rhs(s + h / 2.0, &(&rho + &k2 * c(h / 2.0, 0.0)))?;
        let k4 = rhs(s + h, &(&rho + &k3 * c(h, 0.0)))?;
        rho += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
    }
    Ok(rho)
}

/// Piecewise-linear interpolation between operators tabulated at increasing times;
/// constant outside the table.
#[derive(Debug, Clone)]
pub struct Tabulated {
    times: Vec<f64>,
    hamiltonians: Vec<CMatrix>,
    /// `jumps[i]` holds every jump operator at `times[i]`.
    jumps: Vec<Vec<CMatrix>>,
}

impl Tabulated {
    pub fn new(times: Vec<f64>, hamiltonians: Vec<CMatrix>, jumps: Vec<Vec<CMatrix>>) -> Result<Self> {
        if times.is_empty() || hamiltonians.len() != times.len() || jumps.len() != times.len() {
            return Err(Error::model("tabulated operators must match the time grid"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::model("tabulation times must be strictly increasing"));
        }
        let m = jumps[0].len();
        if jumps.iter().any(|j| j.len() != m) {
            return Err(Error::model("every tabulation time needs the same number of jumps"));
        }
        Ok(Self {
            times,
            hamiltonians,
            jumps,
        })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        (i, (t - self.times[i]) / (self.times[i + 1] - self.times[i]))
    }

    pub fn at(&self, t: f64) -> (CMatrix, Vec<CMatrix>) {
        let (i, f) = self.locate(t);
        if self.times.len() == 1 {
            return (self.hamiltonians[0].clone(), self.jumps[0].clone());
        }
        let lerp = |a: &CMatrix, b: &CMatrix| a * c(1.0 - f, 0.0) + b * c(f, 0.0);
        (
            lerp(&self.hamiltonians[i], &self.hamiltonians[i + 1]),
            self.jumps[i].iter().zip(&self.jumps[i + 1]).map(|(a, b)| lerp(a, b)).collect(),
        )
    }

    /// Sup norms over the horizon; for piecewise-linear data they occur at table points.
    pub fn factors(&self) -> NormalizingFactors {
        let m = self.jumps[0].len();
        NormalizingFactors {
            alpha0: self.hamiltonians.iter().map(linalg::spectral_norm).fold(0.0, f64::max),
            alphas: (0..m)
                .map(|j| self.jumps.iter().map(|l| linalg::spectral_norm(&l[j])).fold(0.0, f64::max))
                .collect(),
        }
    }

    pub fn into_model(self, jdot_bound: f64) -> Result<TimeDependentLindbladian> {
        let factors = self.factors();
        let table = Arc::new(self);
        TimeDependentLindbladian::new(Arc::new(move |t| table.at(t)), factors, jdot_bound)
    }
}
