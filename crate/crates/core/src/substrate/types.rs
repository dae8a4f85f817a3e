//! Core data types for the memory substrate.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Opaque 128-bit fragment identifier.
///
/// The high 64 bits carry a (non-decreasing) timestamp component and the low
/// 64 bits a strictly increasing counter, so ordering by id equals ordering
/// by creation — sorting any fragment set by id reconstructs insertion order
/// without a separate sequence field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FragmentId(u128);

impl FragmentId {
    pub(crate) fn new(ts_component: u64, counter: u64) -> Self {
        Self(((ts_component as u128) << 64) | counter as u128)
    }

    /// Construct from a raw 128-bit value (tests and tooling).
    pub fn from_raw(raw: u128) -> Self {
        Self(raw)
    }

    pub fn raw(&self) -> u128 {
        self.0
    }

    /// Timestamp component (seconds) baked into the id.
    pub fn ts_component(&self) -> u64 {
        (self.0 >> 64) as u64
    }

    /// Creation counter baked into the id.
    pub fn counter(&self) -> u64 {
        self.0 as u64
    }
}

impl fmt::Display for FragmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for FragmentId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self(s.parse::<u128>()?))
    }
}

// Serialize as a decimal string: JSON numbers above 2^53 are hazardous for
// downstream tooling, and ids must survive every round trip bit-exactly.
impl Serialize for FragmentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for FragmentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// How a fragment relates to time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalClass {
    /// A dated occurrence tied to a session.
    Episodic,
    /// A recurring pattern ("every Tuesday").
    Habitual,
    /// A standing fact with no time anchor.
    Timeless,
}

/// Retrieval eligibility of a fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentState {
    Active,
    /// Excluded from ordinary retrieval; wakes only under a strong cue.
    Dormant,
}

/// Provenance category of a fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    /// Ingested conversational text.
    Raw,
    /// Compressed stand-in for an oversize raw text.
    Summary,
    /// Abstraction over a semantic cluster.
    Insight,
    /// Compression of a recurring episode shape.
    Gist,
}

impl FragmentKind {
    /// Derived kinds must carry lineage back to their sources.
    pub fn requires_lineage(self) -> bool {
        matches!(self, Self::Summary | Self::Insight | Self::Gist)
    }
}

/// Where a fragment came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Free-form source tag ("conversation", "consolidation", ...).
    pub source: String,
    /// Fragments this one was derived from (summaries, insights, gists).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lineage: Vec<FragmentId>,
    /// Texts that were merged into this fragment as near-duplicates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged_texts: Vec<String>,
}

impl Provenance {
    pub fn source(tag: &str) -> Self {
        Self {
            source: tag.to_string(),
            ..Self::default()
        }
    }
}

/// One remembered item: a node in the memory graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFragment {
    pub id: FragmentId,
    pub content: String,
    /// Unit-norm embedding of `content`.
    pub embedding: Vec<f64>,
    pub created_at: u64,
    /// Never earlier than `created_at`; bumped by retrieval and merges.
    pub last_accessed_at: u64,
    pub session: String,
    /// Episode counter value this fragment belongs to (0 = none/derived).
    pub episode: u64,
    /// Emotional/practical importance in [0, 1].
    pub salience: f64,
    /// Cumulative retrieval/merge reinforcement, never negative.
    pub reinforcement: f64,
    pub temporal_class: TemporalClass,
    pub state: FragmentState,
    pub kind: FragmentKind,
    pub provenance: Provenance,
}

/// Fields of a fragment supplied by callers; the store assigns the id and
/// initializes `last_accessed_at = created_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentDraft {
    pub content: String,
    pub embedding: Vec<f64>,
    pub created_at: u64,
    pub session: String,
    pub episode: u64,
    pub salience: f64,
    pub reinforcement: f64,
    pub temporal_class: TemporalClass,
    pub state: FragmentState,
    pub kind: FragmentKind,
    pub provenance: Provenance,
}

/// Typed relationships between fragments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Content similarity, discovered at ingest.
    Semantic,
    /// Conversational succession within an episode (earlier -> later).
    TemporalFollowedBy,
    /// Grown by co-retrieval.
    Associative,
    /// Links derived fragments (insights, gists, summaries) to sources.
    DerivedFrom,
}

/// A weighted, typed, directed edge. At most one edge exists per
/// (from, to, kind) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: FragmentId,
    pub to: FragmentId,
    pub kind: EdgeKind,
    /// Strength in [0, 1].
    pub weight: f64,
    pub created_at: u64,
    pub last_reinforced_at: u64,
}

/// Map key for edges.
pub type EdgeKey = (FragmentId, FragmentId, EdgeKind);

/// Why a mutation happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationCause {
    RetrievalReinforce,
    Suppression,
    Merge,
    Replay,
    Decay,
    Eviction,
    Consolidation,
}

/// Which field a mutation touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum ChangedField {
    Salience,
    Reinforcement,
    State,
    /// Weight change on an edge out of the logged fragment.
    EdgeWeight { to: FragmentId, kind: EdgeKind },
    Evicted,
}

/// Append-only audit record: one entry per realized mutation to salience,
/// reinforcement, state, or an edge weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationLogEntry {
    pub ts: u64,
    pub fragment: FragmentId,
    #[serde(flatten)]
    pub change: ChangedField,
    /// Signed magnitude of the change. For state flips: +1 into dormancy,
    /// -1 back to active. For evictions: 1.
    pub delta: f64,
    pub cause: MutationCause,
}

/// Record left behind by an eviction. Content embeddings are dropped but
/// provenance survives so lineage questions stay answerable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tombstone {
    pub id: FragmentId,
    pub evicted_at: u64,
    pub kind: FragmentKind,
    pub provenance: Provenance,
}

/// Mutable bookkeeping the store carries alongside fragments and edges.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreCounters {
    /// Next value of the id counter component.
    pub next_counter: u64,
    /// Highest timestamp component handed out in an id (ids never regress).
    pub last_id_ts: u64,
    /// Highest episode number assigned so far (episodes start at 1).
    pub episode_counter: u64,
    /// Episode the conversational flow is currently inside (0 = none yet).
    pub current_episode: u64,
    /// Timestamp of the most recent ingested text (monotonic clock).
    pub last_ingest_ts: u64,
    /// Session of the most recent *created* conversational fragment.
    pub last_session: Option<String>,
    /// Tail of the current episode's temporal chain.
    pub episode_tail: Option<FragmentId>,
    /// Logical mutation sequence — equals the number of committed ops and
    /// the sequence number of the last WAL record.
    pub wal_seq: u64,
}

/// Change applied to a single fragment field, in replayable form: deltas are
/// precomputed so that re-applying the op is exact regardless of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldChange {
    Reinforce { delta: f64 },
    Salience { delta: f64 },
    State { state: FragmentState },
    LastAccessed { at: u64 },
}

/// The store's low-level mutation language. Every state change is one of
/// these, applied in memory and appended to the WAL; replaying the sequence
/// from an empty store reproduces the state exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StoreOp {
    AddFragment {
        fragment: MemoryFragment,
        /// Whether this fragment extends the conversational flow (episode
        /// chaining state, session context buffer).
        conversational: bool,
    },
    /// Fold a near-duplicate text into an existing fragment.
    MergeFragment {
        id: FragmentId,
        text: String,
        session: String,
        ts: u64,
        salience_delta: f64,
        reinforce_delta: f64,
    },
    /// Create an edge or raise an existing one to `weight` (max-merge).
    UpsertEdge {
        from: FragmentId,
        to: FragmentId,
        kind: EdgeKind,
        weight: f64,
        ts: u64,
    },
    /// Additive edge reinforcement with a cap; creates at `init` if absent.
    BumpEdge {
        from: FragmentId,
        to: FragmentId,
        kind: EdgeKind,
        delta: f64,
        init: Option<f64>,
        cap: f64,
        ts: u64,
        cause: MutationCause,
    },
    MutateFragment {
        id: FragmentId,
        change: FieldChange,
        ts: u64,
        cause: MutationCause,
    },
    Evict {
        id: FragmentId,
        ts: u64,
    },
}
