use thiserror::Error;

use crate::correlators::CorrelatorKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("value {value} is not rational (nonzero q-components at powers {components:?})")]
    NotRational { value: String, components: Vec<usize> },

    #[error("series variable systems or truncations do not match: {0}")]
    Mismatch(String),

    #[error("requested weight {requested} exceeds reliable weight {reliable}")]
    BeyondPrecision { requested: u32, reliable: u32 },

    #[error("substitution for {var} is not weight-compatible: {detail}")]
    WeightIncompatible { var: String, detail: String },

    #[error("logarithm needs a series with constant term 1: {0}")]
    LogDomain(String),

    #[error("operator is not monic of order {order}: {detail}")]
    NotMonic { order: u32, detail: String },

    #[error("operator window does not reach exponent {exponent} (exact only from {floor})")]
    OutsideWindow { exponent: i32, floor: i32 },

    #[error("inconsistent jets at {monomial}: flow {first} gives {first_value}, flow {second} gives {second_value}")]
    InconsistentJet {
        monomial: String,
        first: u32,
        first_value: String,
        second: u32,
        second_value: String,
    },

    #[error("unused T1 flow fails for {object} at {monomial}")]
    T1FlowViolation { object: String, monomial: String },

    #[error("invalid correlator key {key}: {reason}")]
    InvalidKey { key: String, reason: String },

    #[error("missing base value for {0}")]
    NeedsBase(CorrelatorKey),

    #[error("conflicting values for {key}: {old} vs {new}")]
    Conflict { key: CorrelatorKey, old: String, new: String },

    #[error("inconsistent linear system: equation from {0} has no solution")]
    InconsistentSystem(String),

    #[error("{path}:{line}: {reason}")]
    Table { path: String, line: usize, reason: String },

    #[error("unsupported parameters: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
