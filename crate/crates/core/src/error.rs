use thiserror::Error;

/// Errors shared by every solver in the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkmError {
    /// Malformed input: bad point ids, missing facilities, mismatched sizes.
    #[error("structural error: {0}")]
    Structural(String),

    /// A graph used to build a metric is not connected.
    #[error("graph is disconnected: no path between points {from} and {to}")]
    Disconnected { from: usize, to: usize },

    /// Total available capacity is smaller than the number of clients.
    #[error("infeasible: capacity falls short of the client count by {shortfall}")]
    Infeasible { shortfall: usize },

    /// An exhaustive routine was asked to run beyond its size guard.
    #[error("refused to run at this scale: {0}")]
    RefusedScale(String),

    /// An invariant that the algorithm guarantees was observed to fail.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CkmError>;

impl From<std::io::Error> for CkmError {
    fn from(e: std::io::Error) -> Self {
        CkmError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CkmError {
    fn from(e: serde_json::Error) -> Self {
        CkmError::Parse(format!("line {} column {}: {}", e.line(), e.column(), e))
    }
}
