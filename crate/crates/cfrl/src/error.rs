use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("environment error: {0}")]
    Env(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("episode truncated by constrained-step cap after {inner_steps} inner steps")]
    ConstraintCapExceeded { inner_steps: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Tag an io error with the path it came from, so "No such file or
/// directory" always names the file.
pub(crate) fn io_at(path: &std::path::Path, err: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(err.kind(), format!("{}: {err}", path.display())))
}
