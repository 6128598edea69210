use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid arity {arity}: {reason}")]
    InvalidArity { arity: usize, reason: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("point is not on the unit sphere (norm {norm})")]
    NotSpherical { norm: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("determinant {value} is negative beyond tolerance {tolerance}")]
    NegativeDeterminant { value: f64, tolerance: f64 },

    #[error("Gegenbauer polynomial P_{m}^{d} is undefined")]
    UndefinedGegenbauer { d: usize, m: usize },

    #[error("tail is degenerate (condition number {condition:e})")]
    DegenerateTail { condition: f64 },

    #[error("coefficient matrix for block m={m} rejected: {reason}")]
    InvalidBlock { m: usize, reason: String },

    #[error("weights must be nonnegative and sum to 1 (sum {sum})")]
    InvalidWeights { sum: f64 },

    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),

    #[error("non-finite kernel value encountered")]
    NonFinite,

    #[error("coincident points under a singular kernel")]
    CoincidentPoints,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
