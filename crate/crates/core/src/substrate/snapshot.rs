//! Snapshot format: the complete store state as one canonical JSON document.
//!
//! Snapshots are written atomically (temp file + rename) and carry everything
//! needed to reproduce the store byte-for-byte: parameters, fragments, edges,
//! counters, tombstones, the mutation log, and session context buffers.
//! Because the canonical form is deterministic, dump -> restore -> dump is an
//! identity on bytes, which the test suite pins.

use super::types::{Edge, MemoryFragment, MutationLogEntry, StoreCounters, Tombstone};
use crate::params::EngineParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Version of the snapshot document format.
pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Serialized store state. Field order here is the canonical order in the
/// emitted JSON; collections are sorted by id/key before serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotDoc {
    pub schema_version: u32,
    pub params: EngineParams,
    pub fragments: Vec<MemoryFragment>,
    pub edges: Vec<Edge>,
    pub counters: StoreCounters,
    pub tombstones: Vec<Tombstone>,
    pub mutation_log: Vec<MutationLogEntry>,
    pub session_buffers: BTreeMap<String, Vec<String>>,
}

impl SnapshotDoc {
    /// The canonical textual form: pretty JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("snapshot always serializes");
        text.push('\n');
        text
    }

    /// Atomically write the document to `path` (temp file in the same
    /// directory, fsync, rename). Returns the number of bytes written.
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

    /// Read and parse a snapshot file. Malformed JSON, unknown fields, or a
    /// schema version mismatch surface as [`Error::Corrupt`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: SnapshotDoc = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("snapshot unreadable: {e}")))?;
        if doc.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::Corrupt(format!(
                "snapshot schema version {} unsupported (expected {SNAPSHOT_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}
