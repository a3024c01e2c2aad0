use thiserror::Error;

/// Errors raised by the precoding library and the experiment harness.
#[derive(Debug, Error)]
pub enum FawpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown constellation `{0}`")]
    UnknownConstellation(String),

    #[error("unknown precoder `{0}`")]
    UnknownPrecoder(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("entry {value} at ({row}, {col}) is not in the {bits}-bit alphabet")]
    NotInAlphabet {
        row: usize,
        col: usize,
        bits: u32,
        value: String,
    },

    #[error("instance too large for exhaustive search: {candidates} candidates (limit {limit})")]
    TooLarge { candidates: f64, limit: f64 },

    #[error("user placement infeasible: {0}")]
    Placement(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FawpError>;
