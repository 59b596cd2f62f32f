//! Error type shared across the crate.

/// Alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tree must have at least one node, got n = 0")]
    EmptyTree,

    #[error("branching factor must be at least 2, got {0}")]
    BranchSize(usize),

    #[error("dimension mismatch in {op}: {detail}")]
    DimMismatch { op: &'static str, detail: String },

    #[error("invalid mixing matrix: {0}")]
    Stochasticity(String),

    #[error("batch size {batch} out of range 1..={samples}")]
    BatchRange { batch: usize, samples: usize },

    #[error("power iteration did not settle within {iters} iterations (estimate {estimate:.6e})")]
    NoConvergence { iters: usize, estimate: f64 },

    #[error("non-finite iterate at agent {agent}, iteration {iteration} ({algo})")]
    Divergence {
        agent: usize,
        iteration: u64,
        algo: &'static str,
    },

    #[error("invalid step-size schedule: {0}")]
    Schedule(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("message engine: node {node} missing message from {from} at iteration {iteration}")]
    MissingMessage {
        node: usize,
        from: usize,
        iteration: u64,
    },

    #[error("parse error: {0}")]
    Parse(String),
}
