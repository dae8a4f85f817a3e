//! Recency-weighted flat-vector baseline for head-to-head comparisons.
//!
//! The baseline is everything the memory engine is not: a flat list of
//! immutable documents with no dedup, no edges, no reinforcement, and no
//! state. Retrieval multiplies cosine similarity by an exponential
//! recency factor so fresher content outranks marginally-better stale
//! matches, and it is strictly read-only — no sequence of retrievals
//! changes a byte of the store. Both sides of a comparison must share
//! one embedding provider, which is pinned by fingerprint at
//! construction and re-asserted on every call.

use crate::embedding::{cosine, EmbeddingProvider};
use crate::params::EngineParams;
use crate::retrieval::recency_weight;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Version of the baseline store file format.
pub const RAG_SCHEMA_VERSION: u32 = 1;

/// Weight on each term under the additive score variant.
const ADDITIVE_WEIGHT: f64 = 0.5;

/// How similarity and recency combine into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RagScoreMode {
    /// `max(0, cos) * e^(-lambda * age)` — the default; freshness scales
    /// similarity, so a zero-similarity document can never rank.
    #[default]
    Multiplicative,
    /// `0.5 * max(0, cos) + 0.5 * e^(-lambda * age)` — sensitivity
    /// variant; freshness alone can lift an unrelated document.
    Additive,
}

/// One immutable baseline document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagDocument {
    pub id: u64,
    pub text: String,
    pub embedding: Vec<f64>,
    pub created_at: u64,
}

/// A flat document store with recency-weighted scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagStore {
    schema_version: u32,
    lambda: f64,
    score_mode: RagScoreMode,
    embedder_fingerprint: String,
    documents: Vec<RagDocument>,
}

/// One retrieval hit: the document plus its score decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RagHit {
    pub id: u64,
    pub text: String,
    pub score: f64,
    pub similarity: f64,
    pub recency: f64,
}

impl RagStore {
    /// Empty store bound to `embedder`'s fingerprint, borrowing the decay
    /// rate from the engine parameters so both systems age alike.
    pub fn new(
        params: &EngineParams,
        score_mode: RagScoreMode,
        embedder: &dyn EmbeddingProvider,
    ) -> Self {
        Self {
            schema_version: RAG_SCHEMA_VERSION,
            lambda: params.lambda,
            score_mode,
            embedder_fingerprint: embedder.fingerprint(),
            documents: Vec::new(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn score_mode(&self) -> RagScoreMode {
        self.score_mode
    }

    pub fn fingerprint(&self) -> &str {
        &self.embedder_fingerprint
    }

    pub fn documents(&self) -> &[RagDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Timestamp of the newest stored document (0 when empty); a safe
    /// default "now" for queries against historical data.
    pub fn last_ts(&self) -> u64 {
        self.documents.iter().map(|d| d.created_at).max().unwrap_or(0)
    }

    /// The canonical textual form: pretty JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("store always serializes");
        text.push('\n');
        text
    }

    /// Atomically write the store to `path` (temp file, fsync, rename).
    /// Returns the number of bytes written.
    pub fn save(&self, path: &Path) -> Result<u64> {
        let bytes = self.to_canonical_json().into_bytes();
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(dir) = dir {
            std::fs::create_dir_all(dir)?;
        }
        let tmp_path = path.with_extension("json.tmp");
        {
            let mut tmp = std::fs::File::create(&tmp_path)?;
            tmp.write_all(&bytes)?;
            tmp.sync_all()?;
        }
        std::fs::rename(&tmp_path, path)?;
        Ok(bytes.len() as u64)
    }

    /// Read and parse a store file. Malformed JSON, unknown fields, or a
    /// schema version mismatch surface as [`Error::Corrupt`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let store: RagStore = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("baseline store unreadable: {e}")))?;
        if store.schema_version != RAG_SCHEMA_VERSION {
            return Err(Error::Corrupt(format!(
                "baseline store schema version {} unsupported (expected {RAG_SCHEMA_VERSION})",
                store.schema_version
            )));
        }
        Ok(store)
    }

    fn check_fingerprint(&self, embedder: &dyn EmbeddingProvider) -> Result<()> {
        let fingerprint = embedder.fingerprint();
        if fingerprint != self.embedder_fingerprint {
            return Err(Error::Invariant(format!(
                "embedding provider mismatch: store built with {}, called with {fingerprint}",
                self.embedder_fingerprint
            )));
        }
        Ok(())
    }
}

/// Append a document. No dedup, no merge, no edges: the same text twice
/// yields two documents, and ids preserve ingest order.
pub fn rag_ingest(
    store: &mut RagStore,
    embedder: &dyn EmbeddingProvider,
    text: &str,
    ts: u64,
) -> Result<u64> {
    store.check_fingerprint(embedder)?;
    let embedding = embedder.embed(text)?;
    let id = store.documents.len() as u64;
    store.documents.push(RagDocument {
        id,
        text: text.to_string(),
        embedding,
        created_at: ts,
    });
    Ok(id)
}

/// Score every document against `query` and return the top `k` hits,
/// ranked by score descending with ties broken by ascending id. Strictly
/// read-only.
pub fn rag_retrieve(
    store: &RagStore,
    embedder: &dyn EmbeddingProvider,
    query: &str,
    k: usize,
    now: u64,
) -> Result<Vec<RagHit>> {
    if k == 0 {
        return Err(Error::Invariant("rag_retrieve requires k >= 1".into()));
    }
    store.check_fingerprint(embedder)?;
    let query_embedding = embedder.embed(query)?;

    let mut hits = Vec::with_capacity(store.documents.len());
    for doc in &store.documents {
        let similarity = cosine(&query_embedding, &doc.embedding).max(0.0);
        let age = if now < doc.created_at {
            return Err(Error::NegativeAge {
                age_seconds: now as f64 - doc.created_at as f64,
            });
        } else {
            (now - doc.created_at) as f64
        };
        let recency = recency_weight(age, store.lambda)?;
        let score = match store.score_mode {
            RagScoreMode::Multiplicative => similarity * recency,
            RagScoreMode::Additive => ADDITIVE_WEIGHT * similarity + ADDITIVE_WEIGHT * recency,
        };
        hits.push(RagHit {
            id: doc.id,
            text: doc.text.clone(),
            score,
            similarity,
            recency,
        });
    }
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(k);
    Ok(hits)
}
