use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("insufficient input: need at least {needed} samples, got {got}")]
    InsufficientInput { needed: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("infeasible alignment: target of length {target_len} cannot fit in {frames} frames")]
    InfeasibleAlignment { target_len: usize, frames: usize },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("beam is empty at frame {frame}")]
    EmptyBeam { frame: usize },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("degenerate filter: all coefficients are zero")]
    DegenerateFilter,
    #[error("invalid wav: {0}")]
    Wav(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
