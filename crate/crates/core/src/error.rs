//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Shape precondition violated by a graph primitive or builder.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A loss or parameter produced NaN/Inf; `node` names the producer.
    #[error("non-finite value produced by {node}")]
    NonFinite { node: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown subject id {0}")]
    UnknownSubject(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("probe error: {0}")]
    Probe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
