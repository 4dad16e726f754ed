use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("POVM is not informationally complete: {0}")]
    NotInformationallyComplete(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("dual set violates the duality constraint (residual {residual:e})")]
    NotADual { residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("qubit count {n} outside the supported range 1..={max}")]
    QubitCount { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset too small: need at least {needed} shots, got {got}")]
    TooFewShots { needed: usize, got: usize },

    #[error("non-finite objective or gradient while optimizing qubit {qubit}")]
    NonFinite { qubit: usize },

    #[error("cannot parse Pauli observable: {0}")]
    ObservableParse(String),

    #[error("shot file line {line}: {msg}")]
    ShotFile { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
