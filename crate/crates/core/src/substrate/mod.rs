//! The persistent memory substrate: fragments, typed weighted edges, an
//! append-only mutation log, and WAL + snapshot durability.
//!
//! All mutation funnels through a small op language ([`StoreOp`]). Each op is
//! applied in memory and appended to the write-ahead log in one step, so
//! replaying the log over an empty store always reproduces the exact state a
//! snapshot at the same offset would contain. Nothing in the substrate runs
//! in the background; every change is caused by an explicit call.

mod snapshot;
mod types;
mod wal;

pub use snapshot::{SnapshotDoc, SNAPSHOT_SCHEMA_VERSION};
pub use types::{
    ChangedField, Edge, EdgeKey, EdgeKind, FieldChange, FragmentDraft, FragmentId, FragmentKind,
    FragmentState, MemoryFragment, MutationCause, MutationLogEntry, Provenance, StoreCounters,
    StoreOp, TemporalClass, Tombstone,
};
pub use wal::{read_wal, record_checksum, WalRecord, WalWriter, WAL_SCHEMA_VERSION};

use crate::params::EngineParams;
use crate::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

/// Rolling context buffer length per session.
pub const SESSION_BUFFER_LEN: usize = 8;

/// Snapshot file name inside a store directory.
pub const SNAPSHOT_FILE: &str = "snapshot.json";
/// WAL file name inside a store directory.
pub const WAL_FILE: &str = "wal.jsonl";

/// Tolerance for unit-norm validation of embeddings.
const NORM_TOLERANCE: f64 = 1e-6;

/// The memory graph plus its durability machinery.
#[derive(Debug)]
pub struct MemoryStore {
    params: EngineParams,
    fragments: BTreeMap<FragmentId, MemoryFragment>,
    edges: BTreeMap<EdgeKey, Edge>,
    /// Incident edge keys per fragment (both directions), derived state.
    adjacency: BTreeMap<FragmentId, BTreeSet<EdgeKey>>,
    tombstones: BTreeMap<FragmentId, Tombstone>,
    mutation_log: Vec<MutationLogEntry>,
    counters: StoreCounters,
    session_buffers: BTreeMap<String, Vec<String>>,
    wal: Option<WalWriter>,
    home: Option<PathBuf>,
}

impl MemoryStore {
    /// Fresh in-memory store (no durability attached).
    pub fn new(params: EngineParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            fragments: BTreeMap::new(),
            edges: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            tombstones: BTreeMap::new(),
            mutation_log: Vec::new(),
            counters: StoreCounters::default(),
            session_buffers: BTreeMap::new(),
            wal: None,
            home: None,
        })
    }

    /// Open (or create) a store directory containing `snapshot.json` and
    /// `wal.jsonl`. An existing snapshot wins over `fresh_params`: stores are
    /// self-describing, and restored state must behave like the store that
    /// wrote it. WAL records past the snapshot offset are re-applied.
    pub fn open_dir(dir: &Path, fresh_params: &EngineParams) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let wal_path = dir.join(WAL_FILE);
        let mut store = if snap_path.exists() {
            let mut s = Self::restore(&snap_path)?;
            if wal_path.exists() {
                let (_, records) = read_wal(&wal_path)?;
                if (records.len() as u64) < s.counters.wal_seq {
                    return Err(Error::Corrupt(format!(
                        "wal holds {} records but snapshot was taken at seq {}",
                        records.len(),
                        s.counters.wal_seq
                    )));
                }
                for rec in &records[s.counters.wal_seq as usize..] {
                    s.apply(&rec.op)
                        .map_err(|e| Error::Corrupt(format!("replay of seq {}: {e}", rec.seq)))?;
                    s.counters.wal_seq = rec.seq;
                }
            }
            s
        } else if wal_path.exists() {
            Self::replay_wal_file(&wal_path)?
        } else {
            Self::new(fresh_params.clone())?
        };
        store.wal = Some(WalWriter::open(&wal_path, &store.params)?);
        store.home = Some(dir.to_path_buf());
        Ok(store)
    }

    /// Rebuild a store purely from its write-ahead log.
    pub fn replay_wal_file(path: &Path) -> Result<Self> {
        let (params, records) = read_wal(path)?;
        let mut store = Self::new(params)?;
        for rec in &records {
            store
                .apply(&rec.op)
                .map_err(|e| Error::Corrupt(format!("replay of seq {}: {e}", rec.seq)))?;
            store.counters.wal_seq = rec.seq;
        }
        Ok(store)
    }

    /// Write a full snapshot to `path`; returns bytes written.
    pub fn snapshot(&self, path: &Path) -> Result<u64> {
        self.to_snapshot_doc().save(path)
    }

    /// Load a store from a snapshot file. The result is observationally
    /// identical to the store that wrote it (fragments, edges, params,
    /// counters, log, buffers); on any validation failure the error is
    /// [`Error::Corrupt`] and no partial state escapes.
    pub fn restore(path: &Path) -> Result<Self> {
        let doc = SnapshotDoc::load(path)?;
        Self::from_snapshot_doc(doc)
    }

    /// Snapshot the store to its home directory (if opened via `open_dir`)
    /// and fsync the WAL.
    pub fn persist(&mut self) -> Result<u64> {
        let home = self
            .home
            .clone()
            .ok_or_else(|| Error::Invariant("store has no home directory".into()))?;
        if let Some(w) = &mut self.wal {
            w.sync()?;
        }
        self.snapshot(&home.join(SNAPSHOT_FILE))
    }

    /// The full state as a canonical document.
    pub fn to_snapshot_doc(&self) -> SnapshotDoc {
        SnapshotDoc {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            params: self.params.clone(),
            fragments: self.fragments.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
            counters: self.counters.clone(),
            tombstones: self.tombstones.values().cloned().collect(),
            mutation_log: self.mutation_log.clone(),
            session_buffers: self.session_buffers.clone(),
        }
    }

    /// Rebuild a store from a snapshot document, validating every invariant.
    pub fn from_snapshot_doc(doc: SnapshotDoc) -> Result<Self> {
        let corrupt = |msg: String| Error::Corrupt(msg);
        doc.params
            .validate()
            .map_err(|e| corrupt(format!("snapshot params invalid: {e}")))?;
        let mut store = Self::new(doc.params.clone())?;
        for fragment in doc.fragments {
            validate_fragment(&fragment, store.params.dim)
                .map_err(|e| corrupt(format!("fragment {}: {e}", fragment.id)))?;
            if store.fragments.insert(fragment.id, fragment.clone()).is_some() {
                return Err(corrupt(format!("duplicate fragment id {}", fragment.id)));
            }
        }
        for edge in doc.edges {
            let key = (edge.from, edge.to, edge.kind);
            validate_edge_shape(&edge)
                .map_err(|e| corrupt(format!("edge {:?}: {e}", key)))?;
            for endpoint in [edge.from, edge.to] {
                if !store.fragments.contains_key(&endpoint) {
                    return Err(corrupt(format!(
                        "edge {key:?} references missing fragment {endpoint}"
                    )));
                }
            }
            if store.edges.insert(key, edge).is_some() {
                return Err(corrupt(format!("duplicate edge {key:?}")));
            }
            store.index_edge(key);
        }
        for tomb in doc.tombstones {
            if store.fragments.contains_key(&tomb.id) {
                return Err(corrupt(format!("fragment {} is both live and tombstoned", tomb.id)));
            }
            store.tombstones.insert(tomb.id, tomb);
        }
        store.mutation_log = doc.mutation_log;
        store.counters = doc.counters;
        store.session_buffers = doc.session_buffers;
        store.audit().map_err(|e| corrupt(format!("audit failed: {e}")))?;
        Ok(store)
    }

    // ------------------------------------------------------------------
    // Accessors
    // ------------------------------------------------------------------

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// Live fragment by id; evicted ids surface their tombstone.
    pub fn fragment(&self, id: FragmentId) -> Result<&MemoryFragment> {
        if let Some(f) = self.fragments.get(&id) {
            return Ok(f);
        }
        match self.tombstones.get(&id) {
            Some(t) => Err(Error::Evicted {
                id,
                tombstone: t.clone(),
            }),
            None => Err(Error::UnknownFragment(id)),
        }
    }

    pub fn fragments(&self) -> impl Iterator<Item = &MemoryFragment> {
        self.fragments.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, from: FragmentId, to: FragmentId, kind: EdgeKind) -> Option<&Edge> {
        self.edges.get(&(from, to, kind))
    }

    pub fn mutation_log(&self) -> &[MutationLogEntry] {
        &self.mutation_log
    }

    pub fn tombstones(&self) -> impl Iterator<Item = &Tombstone> {
        self.tombstones.values()
    }

    pub fn counters(&self) -> &StoreCounters {
        &self.counters
    }

    /// Live fragment count (active + dormant).
    pub fn live_count(&self) -> usize {
        self.fragments.len()
    }

    /// Logical mutation sequence; used to detect stale retrieval results.
    pub fn seq(&self) -> u64 {
        self.counters.wal_seq
    }

    /// The rolling buffer of the most recent texts ingested in `session`.
    pub fn session_context(&self, session: &str) -> &[String] {
        self.session_buffers
            .get(session)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// Edges incident to `id`, in either direction, in key order.
    pub(crate) fn incident_edges(&self, id: FragmentId) -> impl Iterator<Item = &Edge> {
        self.adjacency
            .get(&id)
            .into_iter()
            .flatten()
            .filter_map(move |key| self.edges.get(key))
    }

    /// Outgoing and incoming edges of `id` matching the filter, as
    /// `(neighbor, edge)` pairs sorted by weight descending, ties broken by
    /// ascending neighbor id, then kind, then direction.
    pub fn neighbors(
        &self,
        id: FragmentId,
        kinds: Option<&[EdgeKind]>,
        min_weight: f64,
    ) -> Vec<(FragmentId, Edge)> {
        let mut out: Vec<(FragmentId, Edge)> = self
            .incident_edges(id)
            .filter(|e| kinds.map_or(true, |ks| ks.contains(&e.kind)))
            .filter(|e| e.weight >= min_weight)
            .map(|e| {
                let neighbor = if e.from == id { e.to } else { e.from };
                (neighbor, e.clone())
            })
            .collect();
        out.sort_by(|a, b| {
            b.1.weight
                .total_cmp(&a.1.weight)
                .then_with(|| a.0.cmp(&b.0))
                .then_with(|| a.1.kind.cmp(&b.1.kind))
                .then_with(|| a.1.from.cmp(&b.1.from))
        });
        out
    }

    // ------------------------------------------------------------------
    // Mutations
    // ------------------------------------------------------------------

    /// Insert a fragment outside the conversational flow (derived fragments,
    /// tests, tooling). Ids are strictly increasing across the store's life.
    pub fn add_fragment(&mut self, draft: FragmentDraft) -> Result<FragmentId> {
        self.add_fragment_inner(draft, false)
    }

    /// Insert a fragment that extends the conversational flow: advances the
    /// episode bookkeeping and the session context buffer.
    pub(crate) fn add_conversational(&mut self, draft: FragmentDraft) -> Result<FragmentId> {
        self.add_fragment_inner(draft, true)
    }

    fn add_fragment_inner(&mut self, draft: FragmentDraft, conversational: bool) -> Result<FragmentId> {
        let ts_component = draft.created_at.max(self.counters.last_id_ts);
        let id = FragmentId::new(ts_component, self.counters.next_counter);
        let fragment = MemoryFragment {
            id,
            content: draft.content,
            embedding: draft.embedding,
            created_at: draft.created_at,
            last_accessed_at: draft.created_at,
            session: draft.session,
            episode: draft.episode,
            salience: draft.salience,
            reinforcement: draft.reinforcement,
            temporal_class: draft.temporal_class,
            state: draft.state,
            kind: draft.kind,
            provenance: draft.provenance,
        };
        validate_fragment(&fragment, self.params.dim)?;
        self.commit(StoreOp::AddFragment {
            fragment,
            conversational,
        })?;
        Ok(id)
    }

    /// Fold a near-duplicate `text` into fragment `id`: reinforcement rises
    /// by `delta_r`, salience is raised to the incoming score when higher,
    /// the access clock moves to `ts`, and the text lands in provenance and
    /// the session buffer. Returns (salience_delta, reinforce_delta).
    pub(crate) fn record_merge(
        &mut self,
        id: FragmentId,
        text: &str,
        session: &str,
        ts: u64,
        incoming_salience: f64,
    ) -> Result<(f64, f64)> {
        let fragment = self.fragment(id)?;
        let salience_delta = (incoming_salience - fragment.salience).max(0.0);
        let reinforce_delta = self.params.delta_r;
        self.commit(StoreOp::MergeFragment {
            id,
            text: text.to_string(),
            session: session.to_string(),
            ts,
            salience_delta,
            reinforce_delta,
        })?;
        Ok((salience_delta, reinforce_delta))
    }

    /// Create or strengthen (max-merge) an edge. Self-loops are rejected;
    /// temporal edges must run from the earlier fragment to the later one.
    pub fn connect(
        &mut self,
        from: FragmentId,
        to: FragmentId,
        kind: EdgeKind,
        weight: f64,
        ts: u64,
    ) -> Result<()> {
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::WeightOutOfRange(weight));
        }
        let from_created = self.fragment(from)?.created_at;
        let to_created = self.fragment(to)?.created_at;
        if kind == EdgeKind::TemporalFollowedBy && from_created > to_created {
            return Err(Error::TemporalOrder { from, to });
        }
        self.commit(StoreOp::UpsertEdge {
            from,
            to,
            kind,
            weight,
            ts,
        })
    }

    /// Additively reinforce an edge (creating it at `init` when absent),
    /// capped at `cap`. Returns the realized weight change; no-ops (already
    /// at cap) commit nothing.
    pub(crate) fn bump_edge(
        &mut self,
        from: FragmentId,
        to: FragmentId,
        kind: EdgeKind,
        delta: f64,
        init: Option<f64>,
        cap: f64,
        ts: u64,
        cause: MutationCause,
    ) -> Result<f64> {
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        self.fragment(from)?;
        self.fragment(to)?;
        let actual = match self.edges.get(&(from, to, kind)) {
            Some(edge) => (edge.weight + delta).min(cap) - edge.weight,
            None => match init {
                Some(w) => w.min(cap),
                None => return Err(Error::Invariant(format!(
                    "bump of missing edge ({from}, {to}, {kind:?}) without init"
                ))),
            },
        };
        if actual <= 0.0 {
            return Ok(0.0);
        }
        self.commit(StoreOp::BumpEdge {
            from,
            to,
            kind,
            delta,
            init,
            cap,
            ts,
            cause,
        })?;
        Ok(actual)
    }

    /// Apply a single-field change to a fragment. Returns the realized
    /// delta; changes that would be no-ops commit nothing and log nothing.
    pub(crate) fn mutate(
        &mut self,
        id: FragmentId,
        change: FieldChange,
        ts: u64,
        cause: MutationCause,
    ) -> Result<f64> {
        let fragment = self.fragment(id)?;
        let actual = match &change {
            FieldChange::Reinforce { delta } => {
                (fragment.reinforcement + delta).max(0.0) - fragment.reinforcement
            }
            FieldChange::Salience { delta } => {
                (fragment.salience + delta).clamp(0.0, 1.0) - fragment.salience
            }
            FieldChange::State { state } => {
                if fragment.state == *state {
                    0.0
                } else if *state == FragmentState::Dormant {
                    1.0
                } else {
                    -1.0
                }
            }
            FieldChange::LastAccessed { at } => {
                if *at > fragment.last_accessed_at {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if actual == 0.0 {
            return Ok(0.0);
        }
        self.commit(StoreOp::MutateFragment {
            id,
            change,
            ts,
            cause,
        })?;
        Ok(actual)
    }

    /// Remove a fragment and its incident edges, leaving a tombstone. The
    /// content is gone; provenance survives in the tombstone and the WAL.
    pub fn evict(&mut self, id: FragmentId, ts: u64) -> Result<Tombstone> {
        self.fragment(id)?;
        self.commit(StoreOp::Evict { id, ts })?;
        Ok(self
            .tombstones
            .get(&id)
            .expect("eviction writes a tombstone")
            .clone())
    }

    /// Full structural audit; every invariant the substrate promises.
    pub fn audit(&self) -> Result<()> {
        for fragment in self.fragments.values() {
            validate_fragment(fragment, self.params.dim)?;
        }
        for (key, edge) in &self.edges {
            if *key != (edge.from, edge.to, edge.kind) {
                return Err(Error::Invariant(format!("edge key {key:?} disagrees with edge body")));
            }
            validate_edge_shape(edge)?;
            for endpoint in [edge.from, edge.to] {
                if !self.fragments.contains_key(&endpoint) {
                    return Err(Error::Invariant(format!(
                        "edge {key:?} references missing fragment {endpoint}"
                    )));
                }
            }
            if edge.kind == EdgeKind::TemporalFollowedBy {
                let from = &self.fragments[&edge.from];
                let to = &self.fragments[&edge.to];
                if from.created_at > to.created_at {
                    return Err(Error::Invariant(format!(
                        "temporal edge {key:?} runs backwards in time"
                    )));
                }
            }
        }
        let indexed: usize = self.adjacency.values().map(|s| s.len()).sum();
        if indexed != self.edges.len() * 2 {
            return Err(Error::Invariant(
                "adjacency index out of sync with edge set".into(),
            ));
        }
        for buffer in self.session_buffers.values() {
            if buffer.len() > SESSION_BUFFER_LEN {
                return Err(Error::Invariant("session buffer exceeds cap".into()));
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Op machinery
    // ------------------------------------------------------------------

    fn commit(&mut self, op: StoreOp) -> Result<()> {
        let seq = self.counters.wal_seq + 1;
        self.apply(&op)?;
        self.counters.wal_seq = seq;
        if let Some(w) = &mut self.wal {
            w.append(seq, &op)?;
        }
        Ok(())
    }

    /// Apply one op to in-memory state. Used by `commit` and WAL replay; must
    /// be fully deterministic given the current state.
    fn apply(&mut self, op: &StoreOp) -> Result<()> {
        match op {
            StoreOp::AddFragment {
                fragment,
                conversational,
            } => {
                let id = fragment.id;
                if self.fragments.contains_key(&id) || self.tombstones.contains_key(&id) {
                    return Err(Error::Invariant(format!("fragment id {id} reused")));
                }
                self.counters.next_counter = self.counters.next_counter.max(id.counter() + 1);
                self.counters.last_id_ts = self.counters.last_id_ts.max(id.ts_component());
                self.counters.episode_counter =
                    self.counters.episode_counter.max(fragment.episode);
                if *conversational {
                    self.counters.last_ingest_ts =
                        self.counters.last_ingest_ts.max(fragment.created_at);
                    self.counters.last_session = Some(fragment.session.clone());
                    self.counters.current_episode = fragment.episode;
                    self.counters.episode_tail = Some(id);
                    push_buffer(
                        &mut self.session_buffers,
                        &fragment.session,
                        &fragment.content,
                    );
                }
                self.fragments.insert(id, fragment.clone());
            }
            StoreOp::MergeFragment {
                id,
                text,
                session,
                ts,
                salience_delta,
                reinforce_delta,
            } => {
                let fragment = self
                    .fragments
                    .get_mut(id)
                    .ok_or(Error::UnknownFragment(*id))?;
                if *salience_delta != 0.0 {
                    fragment.salience = (fragment.salience + salience_delta).clamp(0.0, 1.0);
                    self.mutation_log.push(MutationLogEntry {
                        ts: *ts,
                        fragment: *id,
                        change: ChangedField::Salience,
                        delta: *salience_delta,
                        cause: MutationCause::Merge,
                    });
                }
                fragment.reinforcement += reinforce_delta;
                fragment.last_accessed_at = fragment.last_accessed_at.max(*ts);
                fragment.provenance.merged_texts.push(text.clone());
                self.mutation_log.push(MutationLogEntry {
                    ts: *ts,
                    fragment: *id,
                    change: ChangedField::Reinforcement,
                    delta: *reinforce_delta,
                    cause: MutationCause::Merge,
                });
                self.counters.last_ingest_ts = self.counters.last_ingest_ts.max(*ts);
                push_buffer(&mut self.session_buffers, session, text);
            }
            StoreOp::UpsertEdge {
                from,
                to,
                kind,
                weight,
                ts,
            } => {
                let key = (*from, *to, *kind);
                match self.edges.get_mut(&key) {
                    Some(edge) => {
                        if *weight > edge.weight {
                            edge.weight = *weight;
                            edge.last_reinforced_at = *ts;
                        }
                    }
                    None => {
                        self.edges.insert(
                            key,
                            Edge {
                                from: *from,
                                to: *to,
                                kind: *kind,
                                weight: *weight,
                                created_at: *ts,
                                last_reinforced_at: *ts,
                            },
                        );
                        self.index_edge(key);
                    }
                }
            }
            StoreOp::BumpEdge {
                from,
                to,
                kind,
                delta,
                init,
                cap,
                ts,
                cause,
            } => {
                let key = (*from, *to, *kind);
                let actual;
                match self.edges.get_mut(&key) {
                    Some(edge) => {
                        let new = (edge.weight + delta).min(*cap);
                        actual = new - edge.weight;
                        if actual > 0.0 {
                            edge.weight = new;
                            edge.last_reinforced_at = *ts;
                        }
                    }
                    None => {
                        let w = init
                            .ok_or_else(|| {
                                Error::Invariant("edge bump without init".into())
                            })?
                            .min(*cap);
                        actual = w;
                        self.edges.insert(
                            key,
                            Edge {
                                from: *from,
                                to: *to,
                                kind: *kind,
                                weight: w,
                                created_at: *ts,
                                last_reinforced_at: *ts,
                            },
                        );
                        self.index_edge(key);
                    }
                }
                if actual > 0.0 {
                    self.mutation_log.push(MutationLogEntry {
                        ts: *ts,
                        fragment: *from,
                        change: ChangedField::EdgeWeight {
                            to: *to,
                            kind: *kind,
                        },
                        delta: actual,
                        cause: *cause,
                    });
                }
            }
            StoreOp::MutateFragment {
                id,
                change,
                ts,
                cause,
            } => {
                let fragment = self
                    .fragments
                    .get_mut(id)
                    .ok_or(Error::UnknownFragment(*id))?;
                match change {
                    FieldChange::Reinforce { delta } => {
                        let old = fragment.reinforcement;
                        fragment.reinforcement = (old + delta).max(0.0);
                        let actual = fragment.reinforcement - old;
                        if actual != 0.0 {
                            self.mutation_log.push(MutationLogEntry {
                                ts: *ts,
                                fragment: *id,
                                change: ChangedField::Reinforcement,
                                delta: actual,
                                cause: *cause,
                            });
                        }
                    }
                    FieldChange::Salience { delta } => {
                        let old = fragment.salience;
                        fragment.salience = (old + delta).clamp(0.0, 1.0);
                        let actual = fragment.salience - old;
                        if actual != 0.0 {
                            self.mutation_log.push(MutationLogEntry {
                                ts: *ts,
                                fragment: *id,
                                change: ChangedField::Salience,
                                delta: actual,
                                cause: *cause,
                            });
                        }
                    }
                    FieldChange::State { state } => {
                        if fragment.state != *state {
                            fragment.state = *state;
                            let delta = if *state == FragmentState::Dormant {
                                1.0
                            } else {
                                -1.0
                            };
                            self.mutation_log.push(MutationLogEntry {
                                ts: *ts,
                                fragment: *id,
                                change: ChangedField::State,
                                delta,
                                cause: *cause,
                            });
                        }
                    }
                    FieldChange::LastAccessed { at } => {
                        fragment.last_accessed_at = fragment.last_accessed_at.max(*at);
                    }
                }
            }
            StoreOp::Evict { id, ts } => {
                let fragment = self
                    .fragments
                    .remove(id)
                    .ok_or(Error::UnknownFragment(*id))?;
                let incident: Vec<EdgeKey> = self
                    .adjacency
                    .get(id)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                for key in incident {
                    self.edges.remove(&key);
                    for endpoint in [key.0, key.1] {
                        if let Some(set) = self.adjacency.get_mut(&endpoint) {
                            set.remove(&key);
                            if set.is_empty() {
                                self.adjacency.remove(&endpoint);
                            }
                        }
                    }
                }
                if self.counters.episode_tail == Some(*id) {
                    self.counters.episode_tail = None;
                }
                self.tombstones.insert(
                    *id,
                    Tombstone {
                        id: *id,
                        evicted_at: *ts,
                        kind: fragment.kind,
                        provenance: fragment.provenance,
                    },
                );
                self.mutation_log.push(MutationLogEntry {
                    ts: *ts,
                    fragment: *id,
                    change: ChangedField::Evicted,
                    delta: 1.0,
                    cause: MutationCause::Eviction,
                });
            }
        }
        Ok(())
    }

    fn index_edge(&mut self, key: EdgeKey) {
        self.adjacency.entry(key.0).or_default().insert(key);
        self.adjacency.entry(key.1).or_default().insert(key);
    }
}

fn push_buffer(buffers: &mut BTreeMap<String, Vec<String>>, session: &str, text: &str) {
    let buffer = buffers.entry(session.to_string()).or_default();
    buffer.push(text.to_string());
    if buffer.len() > SESSION_BUFFER_LEN {
        let excess = buffer.len() - SESSION_BUFFER_LEN;
        buffer.drain(..excess);
    }
}

fn validate_fragment(fragment: &MemoryFragment, dim: usize) -> Result<()> {
    if fragment.embedding.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: fragment.embedding.len(),
        });
    }
    let norm: f64 = fragment.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Invariant(format!(
            "embedding norm {norm} outside 1 ± {NORM_TOLERANCE}"
        )));
    }
    if !(0.0..=1.0).contains(&fragment.salience) {
        return Err(Error::Invariant(format!(
            "salience {} outside [0, 1]",
            fragment.salience
        )));
    }
    if fragment.reinforcement < 0.0 {
        return Err(Error::Invariant(format!(
            "negative reinforcement {}",
            fragment.reinforcement
        )));
    }
    if fragment.kind.requires_lineage() && fragment.provenance.lineage.is_empty() {
        return Err(Error::Invariant(format!(
            "{:?} fragment without lineage",
            fragment.kind
        )));
    }
    if fragment.last_accessed_at < fragment.created_at {
        return Err(Error::Invariant(
            "last_accessed_at precedes created_at".into(),
        ));
    }
    Ok(())
}

fn validate_edge_shape(edge: &Edge) -> Result<()> {
    if edge.from == edge.to {
        return Err(Error::SelfLoop(edge.from));
    }
    if !(0.0..=1.0).contains(&edge.weight) {
        return Err(Error::WeightOutOfRange(edge.weight));
    }
    Ok(())
}
