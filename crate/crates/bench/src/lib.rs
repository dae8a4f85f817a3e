//! Deterministic fixtures for the engine benchmarks.
//!
//! Everything here is setup — corpus text and preloaded stores — kept out of
//! the timed sections. Corpora are generated with modular arithmetic rather
//! than an RNG so every benchmark run measures exactly the same workload.

use continuum_core::embedding::HashEmbedder;
use continuum_core::ingest::ingest;
use continuum_core::rag::{rag_ingest, RagScoreMode, RagStore};
use continuum_core::{EngineParams, MemoryStore};

/// `n` synthetic corpus lines as (text, session, ts). Twelve rotating topics
/// over a forty-word vocabulary, four interleaved sessions, and irregular
/// inter-arrival gaps so episode boundaries occur naturally. Each line
/// carries a unique `entry` token; almost every line creates a fresh
/// fragment (feature-hash collisions merge a handful per thousand, which is
/// representative ingest work, not noise to avoid).
pub fn corpus(n: usize) -> Vec<(String, String, u64)> {
    let mut lines = Vec::with_capacity(n);
    let mut ts: u64 = 1_000_000;
    for i in 0..n {
        let a = (i * 7 + 3) % 40;
        let b = (i * 13 + 5) % 40;
        let c = (i * 29 + 11) % 40;
        let text = format!(
            "topic{:02} report word{a:02} word{b:02} word{c:02} entry{i:04}",
            i % 12
        );
        let session = format!("session{}", (i / 25) % 4);
        ts += 30 + (i as u64 * 97) % 2_000;
        lines.push((text, session, ts));
    }
    lines
}

/// An in-memory store preloaded with `n` corpus lines, plus the embedder
/// that filled it and the final ingest timestamp.
pub fn seeded_store(n: usize, params: &EngineParams) -> (MemoryStore, HashEmbedder, u64) {
    let embedder = HashEmbedder::new(params.dim);
    let mut store = MemoryStore::new(params.clone()).expect("default params are valid");
    let mut now = 0;
    for (text, session, ts) in corpus(n) {
        ingest(&mut store, &embedder, &text, &session, ts).expect("bench corpus ingests");
        now = ts;
    }
    (store, embedder, now)
}

/// A baseline store holding the same `n` lines.
pub fn seeded_rag(n: usize, params: &EngineParams) -> (RagStore, HashEmbedder, u64) {
    let embedder = HashEmbedder::new(params.dim);
    let mut store = RagStore::new(params, RagScoreMode::default(), &embedder);
    let mut now = 0;
    for (text, _session, ts) in corpus(n) {
        rag_ingest(&mut store, &embedder, &text, ts).expect("bench corpus ingests");
        now = ts;
    }
    (store, embedder, now)
}

/// Deep-copy a store through its snapshot document (stores are deliberately
/// not `Clone`; mutating benchmarks need a fresh copy per iteration).
pub fn clone_store(store: &MemoryStore) -> MemoryStore {
    MemoryStore::from_snapshot_doc(store.to_snapshot_doc()).expect("snapshot round-trips")
}
