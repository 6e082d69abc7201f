use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical divergence at t = {time}: state variable {value} out of range")]
    NumericalDivergence { time: f64, value: f64 },

    #[error("action {action} exceeds bound {bound}")]
    ActionOutOfBounds { action: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("network architectures differ")]
    ArchitectureMismatch,

    #[error("replay buffer holds {size} transitions, need {required}")]
    BufferTooSmall { size: usize, required: usize },

    #[error("slice too short: need more than {required} samples, got {actual}")]
    SliceTooShort { required: usize, actual: usize },

    #[error("line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
