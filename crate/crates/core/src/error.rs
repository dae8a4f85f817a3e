//! Crate-wide error type.

use crate::substrate::{FragmentId, Tombstone};
use thiserror::Error;

/// Convenience alias used across the engine.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the memory engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text produced no tokens (or a degenerate zero vector).
    #[error("cannot embed text: {0}")]
    EmptyEmbedding(String),

    /// Vector dimensionality disagreed with the configured dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Referenced fragment does not exist in the store.
    #[error("unknown fragment {0}")]
    UnknownFragment(FragmentId),

    /// Referenced fragment was evicted; the tombstone explains when and why.
    #[error("fragment {id} was evicted at {}", .tombstone.evicted_at)]
    Evicted { id: FragmentId, tombstone: Tombstone },

    /// Self-loop edges are rejected.
    #[error("self-loop edge on fragment {0}")]
    SelfLoop(FragmentId),

    /// Edge weight outside [0, 1].
    #[error("edge weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),

    /// temporal_followed_by edges must point from earlier to later fragments.
    #[error("temporal edge must run from earlier to later fragment ({from} -> {to})")]
    TemporalOrder { from: FragmentId, to: FragmentId },

    /// Ingest timestamps must be monotonically non-decreasing.
    #[error("clock regression: ingest at {ts} precedes last ingest at {last}")]
    ClockRegression { ts: u64, last: u64 },

    /// Retrieval results are stale: the store mutated after `retrieve`.
    #[error("stale retrieval results: store mutated since retrieve (seq {expected} != {actual})")]
    StaleResults { expected: u64, actual: u64 },

    /// Parameter or fragment field violated a structural invariant.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Persistent state failed validation (bad checksum, truncation, schema).
    #[error("store corruption: {0}")]
    Corrupt(String),

    /// Negative age handed to a decay computation.
    #[error("negative age: {age_seconds} s (clock precedes reference event)")]
    NegativeAge { age_seconds: f64 },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Serialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
