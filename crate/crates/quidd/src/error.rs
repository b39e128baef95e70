use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable ordering violation: {0}")]
    OrderingViolation(String),

    #[error("handle does not belong to this manager")]
    ManagerMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid precision configuration: {0}")]
    InvalidPrecision(String),

    #[error("measurement outcome has zero probability")]
    ZeroProbability,

    #[error("circuit parse error at line {line}, column {column}: {message}")]
    CircuitParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid oracle pattern: {0}")]
    InvalidPattern(String),

    #[error("width {width} exceeds the dense simulation cap of {cap} qubits")]
    WidthOverCap { width: u32, cap: u32 },

    #[error("time budget of {0} seconds exceeded")]
    TimeBudgetExceeded(u64),
}
