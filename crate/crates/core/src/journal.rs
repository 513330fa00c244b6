//! Append-only journal and content-addressed blob store.
//!
//! One line-delimited JSON record per pipeline event. The journal is the
//! single source of truth: statistics are recomputable from it alone, and
//! replaying it after a crash resumes the run without repeating completed
//! work. Bulky payloads (file contents, diffs, rendered reports) live in
//! a blob directory next to the journal, addressed by content digest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SearchHit;
use crate::detector::TaintFinding;
use crate::disclosure::DisclosureArtifact;
use crate::exploit::ExploitOutcome;
use crate::patchgen::ValidationReport;
use crate::pipeline::state::{CandidateState, StateEvent};
use crate::sandbox::LaunchStrategy;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("blob {0} missing")]
    MissingBlob(String),
}

/// Stable candidate identity: digest of the canonical file URL, so reruns
/// and resumed runs agree on identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateId(pub String);

impl CandidateId {
    pub fn from_file_url(file_url: &str) -> Self {
        let digest = Sha256::digest(file_url.as_bytes());
        CandidateId(hex::encode(&digest[..8]))
    }
}

impl std::fmt::Display for CandidateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub repo_id: String,
    pub file_path: String,
    pub file_url: String,
    pub stars: u32,
    pub last_commit: chrono::NaiveDate,
}

impl CandidateMeta {
    pub fn from_hit(hit: &SearchHit) -> Self {
        CandidateMeta {
            repo_id: hit.repo_id.clone(),
            file_path: hit.file_path.clone(),
            file_url: hit.file_url.clone(),
            stars: hit.stars,
            last_commit: hit.last_commit,
        }
    }
}

/// Stage artifacts carried on transitions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finding: Option<TaintFinding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunArtifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ExploitOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchArtifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disclosure: Option<DisclosureArtifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub strategy: LaunchStrategy,
    pub port: u16,
    /// HTTP status of a benign `GET /`, the functional baseline for patch
    /// validation.
    pub baseline_root_status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchArtifact {
    /// Digest of the unified diff in the blob store.
    pub diff_blob: String,
    pub attempts: u32,
    pub validation: ValidationReport,
    pub added_loc: u32,
    pub removed_loc: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    /// A candidate entered the pipeline.
    Candidate {
        id: CandidateId,
        meta: CandidateMeta,
        /// Blob digest of the file content; empty when download failed.
        content_blob: String,
        ts: DateTime<Utc>,
    },
    /// A state transition with its artifacts.
    Transition {
        id: CandidateId,
        from: CandidateState,
        to: CandidateState,
        event: StateEvent,
        ts: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "artifacts_empty")]
        artifacts: Artifacts,
    },
    /// Out-of-band per-candidate fact that is not a state change: the year
    /// the vulnerable pattern first appeared, or disclosure-case updates
    /// (PR opened on escalation, PR status polled) that do not move the
    /// state machine.
    Annotation {
        id: CandidateId,
        #[serde(skip_serializing_if = "Option::is_none")]
        intro_year: Option<i32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        disclosure: Option<DisclosureArtifact>,
        ts: DateTime<Utc>,
    },
    /// Marker: mining for this keyword set ran to completion. Replayed runs
    /// skip the search provider entirely when they see it.
    MineComplete {
        keywords: Vec<String>,
        ts: DateTime<Utc>,
    },
}

fn artifacts_empty(a: &Artifacts) -> bool {
    a == &Artifacts::default()
}

impl Record {
    pub fn candidate_id(&self) -> Option<&CandidateId> {
        match self {
            Record::Candidate { id, .. }
            | Record::Transition { id, .. }
            | Record::Annotation { id, .. } => Some(id),
            Record::MineComplete { .. } => None,
        }
    }
}

/// Content-addressed blob directory.
pub struct BlobStore {
    dir: PathBuf,
}

impl BlobStore {
    pub fn put(&self, bytes: &[u8]) -> Result<String, JournalError> {
        let digest = hex::encode(Sha256::digest(bytes));
        let path = self.path_for(&digest);
        if !path.exists() {
            fs::create_dir_all(path.parent().unwrap())?;
            fs::write(&path, bytes)?;
        }
        Ok(digest)
    }

    pub fn get(&self, digest: &str) -> Result<Vec<u8>, JournalError> {
        let path = self.path_for(digest);
        if !path.exists() {
            return Err(JournalError::MissingBlob(digest.to_string()));
        }
        Ok(fs::read(path)?)
    }

    pub fn get_string(&self, digest: &str) -> Result<String, JournalError> {
        Ok(String::from_utf8_lossy(&self.get(digest)?).into_owned())
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        let prefix = digest.get(..2).unwrap_or("xx");
        self.dir.join(prefix).join(digest)
    }
}

pub struct Journal {
    path: PathBuf,
    blob_dir: PathBuf,
}

impl Journal {
    /// Opens (creating if needed) a journal at `path`, blobs beside it.
    pub fn open(path: &Path) -> Result<Journal, JournalError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let blob_dir = path.with_extension("blobs");
        fs::create_dir_all(&blob_dir)?;
        if !path.exists() {
            fs::File::create(path)?;
        }
        Ok(Journal {
            path: path.to_path_buf(),
            blob_dir,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn blobs(&self) -> BlobStore {
        BlobStore {
            dir: self.blob_dir.clone(),
        }
    }

    /// Append one record and flush it to disk before returning.
    pub fn append(&self, record: &Record) -> Result<(), JournalError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let mut file = fs::OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    /// All parseable records plus the count of corrupt lines skipped.
    pub fn replay(&self) -> Result<(Vec<Record>, u32), JournalError> {
        let file = fs::File::open(&self.path)?;
        let reader = BufReader::new(file);
        let mut records = Vec::new();
        let mut corrupt = 0u32;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    corrupt += 1;
                    log::warn!("skipping corrupt journal line: {e}");
                }
            }
        }
        Ok((records, corrupt))
    }
}

/// Folded per-candidate view of the journal.
#[derive(Debug, Clone)]
pub struct CandidateRecord {
    pub id: CandidateId,
    pub meta: CandidateMeta,
    pub content_blob: String,
    pub state: CandidateState,
    pub finding: Option<TaintFinding>,
    pub run: Option<RunArtifact>,
    pub outcome: Option<ExploitOutcome>,
    pub patch: Option<PatchArtifact>,
    pub disclosure: Option<DisclosureArtifact>,
    pub intro_year: Option<i32>,
}

/// Replay into per-candidate records, preserving first-seen order.
pub fn project(records: &[Record]) -> Vec<CandidateRecord> {
    let mut order: Vec<CandidateId> = Vec::new();
    let mut map: std::collections::HashMap<CandidateId, CandidateRecord> =
        std::collections::HashMap::new();
    for record in records {
        match record {
            Record::Candidate {
                id,
                meta,
                content_blob,
                ..
            } => {
                if !map.contains_key(id) {
                    order.push(id.clone());
                    map.insert(
                        id.clone(),
                        CandidateRecord {
                            id: id.clone(),
                            meta: meta.clone(),
                            content_blob: content_blob.clone(),
                            state: CandidateState::Discovered,
                            finding: None,
                            run: None,
                            outcome: None,
                            patch: None,
                            disclosure: None,
                            intro_year: None,
                        },
                    );
                }
            }
            Record::Transition {
                id, to, artifacts, ..
            } => {
                if let Some(cr) = map.get_mut(id) {
                    cr.state = *to;
                    if let Some(f) = &artifacts.finding {
                        cr.finding = Some(f.clone());
                    }
                    if let Some(r) = &artifacts.run {
                        cr.run = Some(r.clone());
                    }
                    if let Some(o) = &artifacts.outcome {
                        cr.outcome = Some(o.clone());
                    }
                    if let Some(p) = &artifacts.patch {
                        cr.patch = Some(p.clone());
                    }
                    if let Some(d) = &artifacts.disclosure {
                        cr.disclosure = Some(d.clone());
                    }
                }
            }
            Record::Annotation {
                id,
                intro_year,
                disclosure,
                ..
            } => {
                if let Some(cr) = map.get_mut(id) {
                    if intro_year.is_some() {
                        cr.intro_year = *intro_year;
                    }
                    if let Some(d) = disclosure {
                        cr.disclosure = Some(d.clone());
                    }
                }
            }
            Record::MineComplete { .. } => {}
        }
    }
    order.into_iter().filter_map(|id| map.remove(&id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_meta() -> CandidateMeta {
        CandidateMeta {
            repo_id: "u/r".into(),
            file_path: "server.js".into(),
            file_url: "mock://u/r/server.js".into(),
            stars: 10,
            last_commit: chrono::NaiveDate::from_ymd_opt(2024, 6, 1).unwrap(),
        }
    }

    #[test]
    fn append_replay_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let journal = Journal::open(&dir.path().join("run.jsonl")).unwrap();
        let id = CandidateId::from_file_url("mock://u/r/server.js");
        journal
            .append(&Record::Candidate {
                id: id.clone(),
                meta: sample_meta(),
                content_blob: "abc".into(),
                ts: Utc::now(),
            })
            .unwrap();
        journal
            .append(&Record::Transition {
                id: id.clone(),
                from: CandidateState::Discovered,
                to: CandidateState::Downloaded,
                event: StateEvent::Downloaded,
                ts: Utc::now(),
                artifacts: Artifacts::default(),
            })
            .unwrap();
        let (records, corrupt) = journal.replay().unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(corrupt, 0);
        let projected = project(&records);
        assert_eq!(projected.len(), 1);
        assert_eq!(projected[0].state, CandidateState::Downloaded);
    }

    #[test]
    fn corrupt_lines_are_counted_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let journal = Journal::open(&path).unwrap();
        journal
            .append(&Record::Candidate {
                id: CandidateId::from_file_url("x"),
                meta: sample_meta(),
                content_blob: String::new(),
                ts: Utc::now(),
            })
            .unwrap();
        // simulate a torn write
        let mut f = fs::OpenOptions::new().append(true).open(&path).unwrap();
        writeln!(f, "{{\"kind\":\"transition\",\"truncated").unwrap();
        let (records, corrupt) = journal.replay().unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(corrupt, 1);
    }

    #[test]
    fn blob_store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let journal = Journal::open(&dir.path().join("run.jsonl")).unwrap();
        let blobs = journal.blobs();
        let digest = blobs.put(b"content body").unwrap();
        assert_eq!(blobs.get(&digest).unwrap(), b"content body");
        // idempotent
        assert_eq!(blobs.put(b"content body").unwrap(), digest);
        assert!(blobs.get("feedbeef").is_err());
    }

    #[test]
    fn candidate_ids_are_stable() {
        assert_eq!(
            CandidateId::from_file_url("mock://a"),
            CandidateId::from_file_url("mock://a")
        );
        assert_ne!(
            CandidateId::from_file_url("mock://a"),
            CandidateId::from_file_url("mock://b")
        );
    }
}
