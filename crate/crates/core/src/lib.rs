//! Continuum memory engine.
//!
//! A persistent, graph-structured memory substrate in which retrieval is an
//! act that *changes* the store: returned fragments are reinforced, close
//! competitors are suppressed, and co-retrieved fragments grow associative
//! edges. Recall works by spreading activation over typed, weighted edges
//! rather than by similarity alone, and explicit consolidation passes replay
//! recent episodes, abstract clusters into insights, compress recurring
//! episodes into gists, and let unused memories go dormant (never deleted).
//!
//! The crate also ships a recency-weighted retrieval baseline over a flat
//! document store ([`rag`]) and a deterministic evaluation harness ([`eval`])
//! that compares the two engines on four behavioral probe families.
//!
//! Module map:
//!
//! * [`substrate`] — fragments, typed edges, mutation log, WAL + snapshot.
//! * [`embedding`] — deterministic feature-hash embedding provider.
//! * [`ingest`] — salience scoring, episode segmentation, dedup, capacity.
//! * [`activation`] — seeded spreading activation over the memory graph.
//! * [`retrieval`] — multi-factor scoring and retrieval-induced mutation.
//! * [`consolidation`] — replay, abstraction, gist extraction, dormancy.
//! * [`rag`] — flat similarity-plus-recency baseline store.
//! * [`eval`] — probe generators, pairwise judge, statistics, study runner.

pub mod activation;
pub mod consolidation;
pub mod embedding;
mod error;
pub mod eval;
pub mod ingest;
pub mod params;
pub mod rag;
pub mod retrieval;
pub mod substrate;

pub use error::{Error, Result};
pub use params::EngineParams;
pub use substrate::{
    Edge, EdgeKind, FragmentId, FragmentKind, FragmentState, MemoryFragment, MemoryStore,
    MutationCause, MutationLogEntry, TemporalClass,
};
