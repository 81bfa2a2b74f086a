//! Simulation of Lindblad dynamics by truncated Duhamel series whose quadrature
//! discretization is a sum of Kraus maps, plus the error analysis, block-encoding
//! primitives and time-dependent extension built around it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod duhamel;
pub mod error;
pub mod linalg;
pub mod model;
pub mod par;
pub mod primitives;
pub mod quadrature;
pub mod random;
pub mod superop;
pub mod time_dependent;

pub use channel::{choi, cptp_report, diamond_sandwich, trace_norm, ChoiMatrix, CptpReport, DiamondBounds};
pub use duhamel::{
    choose_orders, enumerate_kraus, simulate, simulate_with, CPMapApprox, DriftKind, KrausTerm, SegmentBudget,
    Simulation, SimulationOptions, SimulationReport, TruncationConfig,
};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use model::{Lindbladian, NormalizingFactors};
pub use quadrature::{canonical_rule, nested_grid, NestedGrid, QuadratureRule};
pub use superop::Superoperator;
