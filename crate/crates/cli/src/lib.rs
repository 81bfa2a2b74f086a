//! Command-line front end: model files in, JSON reports and CSV tables out.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
//! 3 the requested precision is out of reach.

pub mod commands;
pub mod model_file;
pub mod pauli;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use model_file::ModelFile;
pub use pauli::{materialize, parse_pauli_sum, PauliSumExpr};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lindsim", version, about = "Duhamel-series simulation of Lindblad dynamics", allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve an initial state and report the truncation parameters and error bounds.
    Simulate(SimulateArgs),
    /// Sweep truncation orders and compare error bounds with measured Choi distances.
    AnalyzeError(AnalyzeArgs),
    /// Tabulate moment identities of the scaled Gauss-Legendre rule.
    Quadrature(QuadratureArgs),
    /// Check the block-encoding primitives on seeded instances and emit a pass/fail matrix.
    PrimitivesVerify(VerifyArgs),
    /// List every Kraus operator of the approximant with its coefficient and normalizer.
    KrausDump(KrausArgs),
    /// Evolve under a tabulated time-dependent model.
    TdSimulate(TdSimulateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Initial state file; defaults to |0...0><0...0|.
    #[arg(long)]
    pub rho0: Option<PathBuf>,
    #[arg(long)]
    pub time: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare against the exact channel (at most 3 qubits).
    #[arg(long)]
    pub verify: bool,
    /// Use the t^k/k! nested-weight budget instead of the conservative one.
    #[arg(long)]
    pub rederived_budget: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, conflicts_with = "random_qubits", required_unless_present = "random_qubits")]
    pub model: Option<PathBuf>,
    /// Use a seeded random model on this many qubits instead of a file.
    #[arg(long)]
    pub random_qubits: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Jump operators of the random model.
    #[arg(long, default_value_t = 1)]
    pub random_jumps: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub time: Vec<f64>,
    #[arg(long = "k", value_delimiter = ',', default_value = "1,2,3,4")]
    pub k: Vec<usize>,
    #[arg(long = "kp", value_delimiter = ',', default_value = "4,8")]
    pub kp: Vec<usize>,
    #[arg(long = "q", value_delimiter = ',', default_value = "2,4")]
    pub q: Vec<usize>,
    /// Fill runtime_ms with wall-clock time (otherwise 0, keeping output reproducible).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuadratureArgs {
    #[arg(long = "q", value_delimiter = ',', default_value = "1,2,4,8")]
    pub q: Vec<usize>,
    #[arg(long = "t", value_delimiter = ',', default_value = "1")]
    pub t: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KrausArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub time: f64,
    #[arg(long = "k")]
    pub k: usize,
    #[arg(long = "kp")]
    pub kp: usize,
    #[arg(long = "q")]
    pub q: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TdSimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub rho0: Option<PathBuf>,
    #[arg(long)]
    pub time: f64,
    #[arg(long)]
    pub eps: f64,
    /// Grid points per propagated interval; chosen from eps when omitted.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Dyson truncation order; chosen from eps when omitted.
    #[arg(long)]
    pub order: Option<usize>,
    /// Also integrate with RK4 and report the trace distance.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 100_000)]
    pub rk4_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Results go to `stdout` unless an `--out` path is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lindsim: {e}");
            e.exit_code()
        }
    }
}
