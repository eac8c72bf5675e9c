use thiserror::Error;

#[derive(Debug, Error)]
pub enum QteError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter vector has length {got}, circuit expects {expected}")]
    ParameterLength { expected: usize, got: usize },

    #[error("invalid ansatz: {0}")]
    InvalidAnsatz(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("too many qubits: {n} exceeds the limit of {max}")]
    TooManyQubits { n: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible method: {0}")]
    IncompatibleMethod(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("numerical abort at step {step}: {reason}")]
    NumericalAbort { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QteError>;
