//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the search, training, and reporting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A gene index falls outside its dimension's domain, or gene/space shapes disagree.
    #[error("invalid gene: {0}")]
    InvalidGene(String),

    /// Tensor or weight-vector dimensions do not match what an operation expects.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step} (loss not finite)")]
    DivergenceError { step: usize },

    /// Not enough data points for a fit or a model selection round.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Rank correlation is undefined because one input is entirely tied.
    #[error("rank correlation undefined: {0}")]
    NaNCorrelation(String),

    /// An operation that needs archive records received none.
    #[error("archive is empty")]
    EmptyArchive,

    /// A corruption type outside the built-in registry was requested.
    #[error("unsupported corruption type: {0}")]
    UnsupportedCorruption(String),

    /// A persisted archive disagrees with the deterministic replay of its run.
    #[error("archive does not match replay: {0}")]
    CorruptArchive(String),

    /// Bad engine or search-space configuration.
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
