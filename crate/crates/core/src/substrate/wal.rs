//! Write-ahead log: a JSON-lines file of checksummed store ops.
//!
//! Line 1 is a header carrying the schema version and the engine parameters,
//! so a log is self-contained: replaying it over an empty store rebuilds the
//! exact state. Every subsequent line is one record `{seq, op, checksum}`
//! with gapless sequence numbers from 1 and a truncated SHA-256 checksum, so
//! torn writes and hand edits are detected instead of silently replayed.

use super::types::StoreOp;
use crate::params::EngineParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Version of the WAL wire format.
pub const WAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WalHeader {
    schema_version: u32,
    kind: String,
    params: EngineParams,
}

/// One committed operation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalRecord {
    pub seq: u64,
    pub op: StoreOp,
    /// First 8 bytes, hex, of SHA-256 over the serialized (seq, op) pair.
    pub checksum: String,
}

#[derive(Serialize)]
struct ChecksumView<'a> {
    seq: u64,
    op: &'a StoreOp,
}

/// Checksum for a record: hex of the first 8 bytes of SHA-256 over the
/// canonical JSON of `{seq, op}`.
pub fn record_checksum(seq: u64, op: &StoreOp) -> String {
    let body = serde_json::to_vec(&ChecksumView { seq, op }).expect("ops always serialize");
    let digest = Sha256::digest(&body);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Appender for the write-ahead log. Opens in append mode and writes the
/// header line only when the file is empty, so reopening never duplicates it.
#[derive(Debug)]
pub struct WalWriter {
    file: BufWriter<File>,
    path: PathBuf,
}

impl WalWriter {
    pub fn open(path: &Path, params: &EngineParams) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut writer = Self {
            file: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        if fresh {
            let header = WalHeader {
                schema_version: WAL_SCHEMA_VERSION,
                kind: "wal".to_string(),
                params: params.clone(),
            };
            serde_json::to_writer(&mut writer.file, &header)?;
            writer.file.write_all(b"\n")?;
            writer.file.flush()?;
        }
        Ok(writer)
    }

    /// Append one record and flush it to the OS.
    pub fn append(&mut self, seq: u64, op: &StoreOp) -> Result<()> {
        let record = WalRecord {
            seq,
            op: op.clone(),
            checksum: record_checksum(seq, op),
        };
        serde_json::to_writer(&mut self.file, &record)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        Ok(())
    }

    /// Flush and fsync the log file.
    pub fn sync(&mut self) -> Result<()> {
        self.file.flush()?;
        self.file.get_ref().sync_all()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Read and verify a WAL: header shape, gapless sequence from 1, checksums.
/// Any violation is reported as [`Error::Corrupt`] naming the offending line.
pub fn read_wal(path: &Path) -> Result<(EngineParams, Vec<WalRecord>)> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Corrupt("wal file is empty (missing header)".into()))??;
    let header: WalHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Corrupt(format!("wal header unreadable: {e}")))?;
    if header.schema_version != WAL_SCHEMA_VERSION {
        return Err(Error::Corrupt(format!(
            "wal schema version {} unsupported (expected {WAL_SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    if header.kind != "wal" {
        return Err(Error::Corrupt(format!(
            "file is a '{}', not a wal",
            header.kind
        )));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Corrupt(format!("wal line {}: {e}", idx + 2)))?;
        let expected_seq = records.len() as u64 + 1;
        if record.seq != expected_seq {
            return Err(Error::Corrupt(format!(
                "wal sequence gap: expected seq {expected_seq}, found {}",
                record.seq
            )));
        }
        let expected_sum = record_checksum(record.seq, &record.op);
        if record.checksum != expected_sum {
            return Err(Error::Corrupt(format!(
                "wal checksum mismatch at seq {}",
                record.seq
            )));
        }
        records.push(record);
    }
    Ok((header.params, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::types::{FieldChange, FragmentId, MutationCause};

    fn sample_op(n: u64) -> StoreOp {
        StoreOp::MutateFragment {
            id: FragmentId::new(1, n),
            change: FieldChange::Reinforce { delta: 0.5 },
            ts: 100 + n,
            cause: MutationCause::RetrievalReinforce,
        }
    }

    #[test]
    fn wal_round_trips_records_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let params = EngineParams::default();
        let mut writer = WalWriter::open(&path, &params).unwrap();
        for seq in 1..=3 {
            writer.append(seq, &sample_op(seq)).unwrap();
        }
        writer.sync().unwrap();
        let (read_params, records) = read_wal(&path).unwrap();
        assert_eq!(read_params, params);
        assert_eq!(records.len(), 3);
        for (i, rec) in records.iter().enumerate() {
            assert_eq!(rec.seq, i as u64 + 1);
            assert_eq!(rec.op, sample_op(rec.seq));
        }
    }

    #[test]
    fn tampered_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let mut writer = WalWriter::open(&path, &EngineParams::default()).unwrap();
        writer.append(1, &sample_op(1)).unwrap();
        writer.sync().unwrap();
        drop(writer);
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"delta\":0.5", "\"delta\":0.75");
        assert_ne!(text, tampered, "tamper target must exist in the record");
        std::fs::write(&path, tampered).unwrap();
        let err = read_wal(&path).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "got {err:?}");
        assert!(err.to_string().contains("checksum"));
    }

    #[test]
    fn sequence_gap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let mut writer = WalWriter::open(&path, &EngineParams::default()).unwrap();
        writer.append(1, &sample_op(1)).unwrap();
        writer.append(3, &sample_op(3)).unwrap();
        writer.sync().unwrap();
        drop(writer);
        let err = read_wal(&path).unwrap_err();
        assert!(err.to_string().contains("sequence gap"), "got {err}");
    }

    #[test]
    fn reopen_appends_without_duplicate_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let params = EngineParams::default();
        {
            let mut writer = WalWriter::open(&path, &params).unwrap();
            writer.append(1, &sample_op(1)).unwrap();
            writer.sync().unwrap();
        }
        {
            let mut writer = WalWriter::open(&path, &params).unwrap();
            writer.append(2, &sample_op(2)).unwrap();
            writer.sync().unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3, "one header plus two records");
        let (_, records) = read_wal(&path).unwrap();
        assert_eq!(records.len(), 2);
    }
}
