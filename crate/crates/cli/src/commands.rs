use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use lindsim::channel::diamond_sandwich;
use lindsim::duhamel::{
    self, bound_duhamel, g_k_factorized, quadrature_total_bound, taylor_total_bound, DriftKind, SegmentBudget,
    SimulationOptions, SimulationReport, TruncationConfig,
};
use lindsim::linalg::{self, CMatrix};
use lindsim::time_dependent::{grid_for_precision, integrate_rk4, td_simulate, DysonConfig, TdSimulationReport};
use lindsim::{par, quadrature, random, trace_norm, Error, Lindbladian};

use crate::model_file::{dense_rows, ground_state, DenseRows, ModelFile, StateSpec};
use crate::{verify, Command, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, EXIT_VERIFICATION};

/// Largest model the exact-channel comparison is run on.
pub const MAX_VERIFY_QUBITS: usize = 3;

#[derive(Debug)]
pub enum CliError {
    Model(Error),
    Io(PathBuf, io::Error),
    Output(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::Output(msg) => write!(f, "{msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::InfeasiblePrecision { .. }) => EXIT_INFEASIBLE,
            _ => EXIT_INVALID,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Model(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn dispatch(cmd: &Command, stdout: &mut dyn Write) -> CliResult<i32> {
    match cmd {
        Command::Simulate(a) => simulate(a, stdout),
        Command::AnalyzeError(a) => analyze_error(a, stdout),
        Command::Quadrature(a) => quadrature_table(a, stdout),
        Command::PrimitivesVerify(a) => primitives_verify(a, stdout),
        Command::KrausDump(a) => kraus_dump(a, stdout),
        Command::TdSimulate(a) => td(a, stdout),
    }
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => File::create(path)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|e| CliError::Io(path.to_path_buf(), e)),
        None => stdout
            .write_all(bytes)
            .map_err(|e| CliError::Output(format!("cannot write output: {e}"))),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, stdout: &mut dyn Write, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    emit(out, stdout, text.as_bytes())
}

fn emit_csv<T: Serialize>(out: Option<&Path>, stdout: &mut dyn Write, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    emit(out, stdout, &bytes)
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")).into())
    }
}

fn nonnegative(name: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be nonnegative, got {v}")).into())
    }
}

fn initial_state(path: Option<&Path>, dim: usize) -> CliResult<CMatrix> {
    match path {
        Some(p) => Ok(StateSpec::load(p)?.to_density_matrix(dim)?),
        None => Ok(ground_state(dim)),
    }
}

#[derive(Serialize)]
struct SimulateOutput {
    rho: DenseRows,
    report: SimulationReport,
}

fn simulate(a: &crate::SimulateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let file = ModelFile::load(&a.model)?;
    let model = file.lindbladian()?;
    nonnegative("time", a.time)?;
    positive("eps", a.eps)?;
    if a.verify && file.n_qubits > MAX_VERIFY_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "--verify supports at most {MAX_VERIFY_QUBITS} qubits"
        ))
        .into());
    }
    let rho0 = initial_state(a.rho0.as_deref(), model.dim())?;
    let opts = SimulationOptions {
        budget: if a.rederived_budget {
            SegmentBudget::Rederived
        } else {
            SegmentBudget::Conservative
        },
        verify: a.verify,
    };
    let sim = duhamel::simulate_with(&model, &rho0, a.time, a.eps, opts)?;
    emit_json(
        a.out.as_deref(),
        stdout,
        &SimulateOutput {
            rho: dense_rows(&sim.rho),
            report: sim.report,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeRow {
    pub model: String,
    pub t: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Kp")]
    pub kp: usize,
    pub q: usize,
    pub bound_duhamel: f64,
    pub bound_quadrature: f64,
    pub bound_taylor: f64,
    pub choi_lower: f64,
    pub choi_upper: f64,
    pub runtime_ms: f64,
}

fn analyze_model(a: &crate::AnalyzeArgs) -> CliResult<(String, Lindbladian)> {
    match (&a.model, a.random_qubits) {
        (Some(path), _) => {
            let file = ModelFile::load(path)?;
            if file.n_qubits > MAX_VERIFY_QUBITS {
                return Err(Error::InvalidArgument(format!(
                    "analyze-error needs the exact channel, so at most {MAX_VERIFY_QUBITS} qubits"
                ))
                .into());
            }
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, file.lindbladian()?))
        }
        (None, Some(n)) => {
            if n == 0 || n > MAX_VERIFY_QUBITS {
                return Err(Error::InvalidArgument(format!(
                    "--random-qubits must be between 1 and {MAX_VERIFY_QUBITS}"
                ))
                .into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let model = random::lindbladian(&mut rng, 1 << n, a.random_jumps, 1.0);
            Ok((format!("random-n{n}-m{}-seed{}", a.random_jumps, a.seed), model))
        }
        (None, None) => Err(Error::InvalidArgument("either --model or --random-qubits is required".into()).into()),
    }
}

pub fn analyze_rows(name: &str, model: &Lindbladian, a: &crate::AnalyzeArgs) -> CliResult<Vec<AnalyzeRow>> {
    for &t in &a.time {
        nonnegative("time", t)?;
    }
    if a.q.contains(&0) {
        return Err(Error::InvalidArgument("quadrature orders must be at least 1".into()).into());
    }
    let mut sweep = Vec::new();
    for &t in &a.time {
        for &k in &a.k {
            for &kp in &a.kp {
                for &q in &a.q {
                    sweep.push((t, k, kp, q));
                }
            }
        }
    }
    let beta = model.be_norm();
    let has_jumps = model.num_jumps() > 0;
    let rows = par::map_slice(&sweep, |&(t, k, kp, q)| -> Result<AnalyzeRow, Error> {
        let start = Instant::now();
        let exact = model.exact_channel(t)?;
        let approx = g_k_factorized(model, t, k, q, DriftKind::Taylor(kp))?;
        let b = diamond_sandwich(&approx, &exact)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        Ok(AnalyzeRow {
            model: name.to_string(),
            t,
            k,
            kp,
            q,
            bound_duhamel: if has_jumps { bound_duhamel(k, t, beta) } else { 0.0 },
            bound_quadrature: quadrature_total_bound(k, q, t, beta),
            bound_taylor: taylor_total_bound(kp, t, beta, has_jumps),
            choi_lower: b.lower,
            choi_upper: b.upper,
            runtime_ms: if a.timing { elapsed } else { 0.0 },
        })
    });
    rows.into_iter().collect::<Result<Vec<_>, _>>().map_err(CliError::from)
}

fn analyze_error(a: &crate::AnalyzeArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let (name, model) = analyze_model(a)?;
    let rows = analyze_rows(&name, &model, a)?;
    emit_csv(a.out.as_deref(), stdout, &rows)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MomentCsvRow {
    q: usize,
    t: f64,
    ell: usize,
    moment_lhs: f64,
    moment_rhs: f64,
    residual: f64,
}

fn quadrature_table(a: &crate::QuadratureArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let mut rows = Vec::new();
    for &q in &a.q {
        for &t in &a.t {
            positive("t", t)?;
            for r in quadrature::moment_table(q, t)? {
                rows.push(MomentCsvRow {
                    q: r.q,
                    t: r.t,
                    ell: r.ell,
                    moment_lhs: r.moment_lhs,
                    moment_rhs: r.moment_rhs,
                    residual: r.residual,
                });
            }
        }
    }
    emit_csv(a.out.as_deref(), stdout, &rows)?;
    Ok(EXIT_OK)
}

fn primitives_verify(a: &crate::VerifyArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let report = verify::primitives_report(a.seed)?;
    emit_json(a.out.as_deref(), stdout, &report)?;
    Ok(if report.all_passed { EXIT_OK } else { EXIT_VERIFICATION })
}

#[derive(Serialize)]
struct KrausRow {
    index: usize,
    k: usize,
    /// Jump indices ℓ_1..ℓ_k, space separated.
    jumps: String,
    /// Quadrature indices j_1..j_k, space separated.
    nodes: String,
    coefficient: f64,
    normalizer: f64,
    operator_norm: f64,
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn kraus_dump(a: &crate::KrausArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let model = ModelFile::load(&a.model)?.lindbladian()?;
    nonnegative("time", a.time)?;
    if a.q == 0 {
        return Err(Error::InvalidArgument("--q must be at least 1".into()).into());
    }
    let cfg = TruncationConfig {
        k: a.k,
        kp: a.kp,
        q: a.q,
        segment_time: a.time,
        num_segments: 1,
    };
    let cp = duhamel::enumerate_kraus(&model, a.time, &cfg)?;
    let rows = par::map_indexed(cp.len(), |i| {
        let term = cp.term(i);
        KrausRow {
            index: i,
            k: term.k,
            jumps: join(&term.jumps),
            nodes: join(&term.nodes),
            coefficient: term.coefficient,
            normalizer: term.normalizer,
            operator_norm: linalg::spectral_norm(&term.matrix),
        }
    });
    emit_csv(a.out.as_deref(), stdout, &rows)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TdOutput {
    rho: DenseRows,
    report: TdSimulationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    rk4_trace_distance: Option<f64>,
}

fn td(a: &crate::TdSimulateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let file = ModelFile::load(&a.model)?;
    let tl = file.time_dependent()?;
    nonnegative("time", a.time)?;
    positive("eps", a.eps)?;
    let rho0 = initial_state(a.rho0.as_deref(), tl.dim())?;
    let grid = match a.grid {
        Some(g) => g,
        None => grid_for_precision(&tl, a.time, a.eps)?,
    };
    let sim = td_simulate(
        &tl,
        &rho0,
        a.time,
        a.eps,
        DysonConfig {
            order: a.order,
            grid,
        },
    )?;
    let rk4_trace_distance = if a.verify {
        let reference = integrate_rk4(&tl, &rho0, a.time, a.rk4_steps)?;
        Some(0.5 * trace_norm(&(&sim.rho - reference)))
    } else {
        None
    };
    emit_json(
        a.out.as_deref(),
        stdout,
        &TdOutput {
            rho: dense_rows(&sim.rho),
            report: sim.report,
            rk4_trace_distance,
        },
    )?;
    Ok(EXIT_OK)
}
