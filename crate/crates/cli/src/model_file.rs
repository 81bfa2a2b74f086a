//! JSON model files.
//!
//! ```json
//! {
//!   "n_qubits": 1,
//!   "hamiltonian": {"pauli": "0.5*Z"},
//!   "jumps": [{"dense": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]}],
//!   "alpha0": 0.5,
//!   "alphas": [1.0]
//! }
//! ```
//!
//! Operators are either `{"pauli": "<expr>"}` or `{"dense": rows}` with complex
//! entries written as `[re, im]`, row-major. An optional `time_dependence`
//! section tabulates every operator on a time grid for piecewise-linear
//! interpolation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use lindsim::linalg::{c, CMatrix, CVector};
use lindsim::time_dependent::{Tabulated, TimeDependentLindbladian};
use lindsim::{Error, Lindbladian, NormalizingFactors};

use crate::pauli::{materialize, parse_pauli_sum};

/// Models above this size are rejected: superoperators grow as `4^{2n}`.
pub const MAX_QUBITS: usize = 5;

pub type DenseRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorSpec {
    Dense(DenseRows),
    Pauli(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDependence {
    pub times: Vec<f64>,
    /// One entry per time.
    pub hamiltonian: Vec<OperatorSpec>,
    /// `jumps[j][i]` is jump `j` at `times[i]`.
    #[serde(default)]
    pub jumps: Vec<Vec<OperatorSpec>>,
    /// Declared bound on `‖dJ/dt‖` over the horizon.
    pub jdot_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_qubits: usize,
    pub hamiltonian: OperatorSpec,
    #[serde(default)]
    pub jumps: Vec<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dependence: Option<TimeDependence>,
}

pub fn dense_rows(m: &CMatrix) -> DenseRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &DenseRows, dim: usize, what: &str) -> Result<CMatrix, Error> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::ModelValidation(format!("{what} must be a {dim}x{dim} matrix")));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

impl OperatorSpec {
    pub fn to_matrix(&self, n_qubits: usize, what: &str) -> Result<CMatrix, Error> {
        match self {
            OperatorSpec::Dense(rows) => matrix_from_rows(rows, 1 << n_qubits, what),
            OperatorSpec::Pauli(text) => Ok(materialize(&parse_pauli_sum(text, n_qubits)?)),
        }
    }

    /// Pauli expressions are rewritten in canonical form.
    fn canonical(&self, n_qubits: usize) -> Result<Self, Error> {
        Ok(match self {
            OperatorSpec::Pauli(text) => OperatorSpec::Pauli(parse_pauli_sum(text, n_qubits)?.to_string()),
            dense => dense.clone(),
        })
    }
}

impl ModelFile {
    /// Parses and validates; Pauli expressions come back canonicalized.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let raw: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            position: e.column(),
            message: format!("line {}: {e}", e.line()),
        })?;
        raw.canonicalize()
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }

    fn canonicalize(self) -> Result<Self, Error> {
        let n = self.n_qubits;
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::ModelValidation(format!(
                "n_qubits must be between 1 and {MAX_QUBITS}, got {n}"
            )));
        }
        let model = ModelFile {
            n_qubits: n,
            hamiltonian: self.hamiltonian.canonical(n)?,
            jumps: self.jumps.iter().map(|j| j.canonical(n)).collect::<Result<_, _>>()?,
            alpha0: self.alpha0,
            alphas: self.alphas,
            time_dependence: match self.time_dependence {
                None => None,
                Some(td) => Some(TimeDependence {
                    hamiltonian: td.hamiltonian.iter().map(|h| h.canonical(n)).collect::<Result<_, _>>()?,
                    jumps: td
                        .jumps
                        .iter()
                        .map(|row| row.iter().map(|j| j.canonical(n)).collect::<Result<_, _>>())
                        .collect::<Result<_, _>>()?,
                    ..td
                }),
            },
        };
        model.lindbladian()?;
        if model.time_dependence.is_some() {
            model.time_dependent()?;
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// The time-independent model (or the `t = 0` operators of a time-dependent one).
    pub fn lindbladian(&self) -> Result<Lindbladian, Error> {
        let n = self.n_qubits;
        let h = self.hamiltonian.to_matrix(n, "hamiltonian")?;
        let jumps = self
            .jumps
            .iter()
            .enumerate()
            .map(|(i, j)| j.to_matrix(n, &format!("jump {i}")))
            .collect::<Result<Vec<_>, _>>()?;
        match (self.alpha0, &self.alphas) {
            (None, None) => Lindbladian::new(h, jumps),
            (alpha0, alphas) => {
                let defaults = Lindbladian::new(h.clone(), jumps.clone())?;
                Lindbladian::with_factors(
                    h,
                    jumps,
                    NormalizingFactors {
                        alpha0: alpha0.unwrap_or(defaults.alpha0()),
                        alphas: alphas.clone().unwrap_or_else(|| defaults.alphas().to_vec()),
                    },
                )
            }
        }
    }

    pub fn time_dependent(&self) -> Result<TimeDependentLindbladian, Error> {
        let td = self
            .time_dependence
            .as_ref()
            .ok_or_else(|| Error::ModelValidation("model has no time_dependence section".into()))?;
        let n = self.n_qubits;
        let steps = td.times.len();
        if td.hamiltonian.len() != steps || td.jumps.iter().any(|j| j.len() != steps) {
            return Err(Error::ModelValidation(
                "every tabulated operator needs one entry per time".into(),
            ));
        }
        if td.jumps.len() != self.jumps.len() {
            return Err(Error::ModelValidation(format!(
                "time_dependence has {} jumps, model has {}",
                td.jumps.len(),
                self.jumps.len()
            )));
        }
        let hs = td
            .hamiltonian
            .iter()
            .map(|h| h.to_matrix(n, "tabulated hamiltonian"))
            .collect::<Result<Vec<_>, _>>()?;
        let jumps = (0..steps)
            .map(|i| {
                td.jumps
                    .iter()
                    .map(|row| row[i].to_matrix(n, "tabulated jump"))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tabulated::new(td.times.clone(), hs, jumps)?.into_model(td.jdot_bound)
    }
}

/// Initial state file: `{"dense": rows}` for a density matrix or `{"pure": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StateSpec {
    Dense(DenseRows),
    Pure(Vec<[f64; 2]>),
}

impl StateSpec {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read state file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            position: e.column(),
            message: format!("line {}: {e}", e.line()),
        })
    }

    pub fn to_density_matrix(&self, dim: usize) -> Result<CMatrix, Error> {
        match self {
            StateSpec::Dense(rows) => matrix_from_rows(rows, dim, "rho0"),
            StateSpec::Pure(amps) => {
                if amps.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: amps.len(),
                    });
                }
                let v = CVector::from_iterator(dim, amps.iter().map(|a| c(a[0], a[1])));
                let norm = v.norm();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::InvalidArgument("pure state has zero norm".into()));
                }
                let v = v / c(norm, 0.0);
                Ok(&v * v.adjoint())
            }
        }
    }
}

/// `|0…0⟩⟨0…0|`
pub fn ground_state(dim: usize) -> CMatrix {
    let mut rho = CMatrix::zeros(dim, dim);
    rho[(0, 0)] = c(1.0, 0.0);
    rho
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAMPING: &str = r#"{
        "n_qubits": 1,
        "hamiltonian": {"pauli": "0.5 * Z"},
        "jumps": [{"dense": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]}]
    }"#;

    #[test]
    fn parses_mixed_operator_forms() {
        let m = ModelFile::from_json(DAMPING).unwrap();
        let l = m.lindbladian().unwrap();
        assert_eq!(l.dim(), 2);
        assert_eq!(l.num_jumps(), 1);
        assert_eq!(m.hamiltonian, OperatorSpec::Pauli("0.5*Z".into()));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let once = ModelFile::from_json(DAMPING).unwrap();
        let twice = ModelFile::from_json(&once.to_json()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.to_json(), twice.to_json());
    }

    #[test]
    fn validation_errors() {
        let wrong_dim = DAMPING.replace("\"n_qubits\": 1", "\"n_qubits\": 2");
        assert!(ModelFile::from_json(&wrong_dim).is_err());
        let non_hermitian = r#"{"n_qubits": 1, "hamiltonian": {"dense": [[[0,0],[1,0]],[[0,0],[0,0]]]}}"#;
        assert!(ModelFile::from_json(non_hermitian).is_err());
        let unknown = r#"{"n_qubits": 1, "hamiltonian": {"pauli": "Z"}, "extra": 1}"#;
        assert!(ModelFile::from_json(unknown).is_err());
        let small_alpha = r#"{"n_qubits": 1, "hamiltonian": {"pauli": "Z"}, "alpha0": 0.5}"#;
        assert!(ModelFile::from_json(small_alpha).is_err());
    }

    #[test]
    fn pure_state_becomes_projector() {
        let s = StateSpec::Pure(vec![[1.0, 0.0], [0.0, 1.0]]);
        let rho = s.to_density_matrix(2).unwrap();
        assert!((rho[(0, 1)] - c(0.0, -0.5)).norm() < 1e-15);
        assert!(s.to_density_matrix(4).is_err());
    }
}
