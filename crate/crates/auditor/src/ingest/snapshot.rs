//! Resumable on-disk snapshots: one UTF-8 JSON object per line.
//!
//! The first line of each file is a header carrying the schema version and
//! the repo the file belongs to. Later lines are issue, timeline_event,
//! contributor_set, or tombstone records. Appending is the only write
//! operation; loading folds the lines into a [`Corpus`] where the newest
//! version of a record wins, so an interrupted fetch plus a resume converges
//! on the same corpus as an uninterrupted one.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::types::{ContributorSet, IssueKey, RawIssue, RawTimelineEvent, RepoRef};
use super::IngestError;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_kind", rename_all = "snake_case")]
enum SnapshotRecord {
    Header {
        schema_version: u32,
        repo: RepoRef,
        fetched_at: DateTime<Utc>,
    },
    Issue(RawIssue),
    TimelineEvent(RawTimelineEvent),
    ContributorSet(ContributorSet),
    /// A record observed deleted upstream; retains the last known issue.
    Tombstone(RawIssue),
}

/// In-memory view of one repository's snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub repo: RepoRef,
    pub fetched_at: DateTime<Utc>,
    pub issues: BTreeMap<u64, RawIssue>,
    pub timelines: BTreeMap<u64, Vec<RawTimelineEvent>>,
    pub contributors: Option<ContributorSet>,
}

impl Corpus {
    pub fn new(repo: RepoRef, fetched_at: DateTime<Utc>) -> Self {
        Corpus {
            repo,
            fetched_at,
            issues: BTreeMap::new(),
            timelines: BTreeMap::new(),
            contributors: None,
        }
    }

    /// Issues that are still live (not tombstoned), ascending by number.
    pub fn live_issues(&self) -> impl Iterator<Item = &RawIssue> {
        self.issues.values().filter(|i| !i.tombstone)
    }

    pub fn timeline(&self, number: u64) -> &[RawTimelineEvent] {
        self.timelines.get(&number).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Referential integrity: every timeline event points at a cached issue.
    pub fn validate_references(&self) -> Result<(), IngestError> {
        for (number, events) in &self.timelines {
            if !self.issues.contains_key(number) {
                return Err(IngestError::Schema(format!(
                    "timeline events for unknown issue #{number} ({} events)",
                    events.len()
                )));
            }
        }
        Ok(())
    }
}

/// Store a corpus as a fresh snapshot file. Deterministic given the corpus:
/// store → load → store reproduces the bytes.
pub fn snapshot_store(corpus: &Corpus, path: &Path) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = File::create(path)?;
    let mut write = |record: &SnapshotRecord| -> Result<(), IngestError> {
        let line = serde_json::to_string(record)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    };
    write(&SnapshotRecord::Header {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        repo: corpus.repo.clone(),
        fetched_at: corpus.fetched_at,
    })?;
    for issue in corpus.issues.values() {
        if issue.tombstone {
            write(&SnapshotRecord::Tombstone(issue.clone()))?;
        } else {
            write(&SnapshotRecord::Issue(issue.clone()))?;
        }
    }
    for events in corpus.timelines.values() {
        for event in events {
            write(&SnapshotRecord::TimelineEvent(event.clone()))?;
        }
    }
    if let Some(contributors) = &corpus.contributors {
        write(&SnapshotRecord::ContributorSet(contributors.clone()))?;
    }
    file.flush()?;
    Ok(())
}

/// Load a snapshot, validating every line; later lines supersede earlier
/// ones with the same identity.
pub fn snapshot_load(path: &Path) -> Result<Corpus, IngestError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut corpus: Option<Corpus> = None;
    // (issue number, event id) → position, so a re-fetched timeline replaces
    // rather than duplicates.
    let mut event_slots: BTreeMap<(u64, String), usize> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::CorruptSnapshot {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SnapshotRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::CorruptSnapshot {
                line: line_no,
                message: e.to_string(),
            })?;
        match record {
            SnapshotRecord::Header {
                schema_version,
                repo,
                fetched_at,
            } => {
                if schema_version != SNAPSHOT_SCHEMA_VERSION {
                    return Err(IngestError::CorruptSnapshot {
                        line: line_no,
                        message: format!("unsupported schema_version {schema_version}"),
                    });
                }
                if corpus.is_none() {
                    corpus = Some(Corpus::new(repo, fetched_at));
                }
                // A resumed run appends another header; the first one wins
                // for identity, the record stream continues.
            }
            other => {
                let corpus = corpus.as_mut().ok_or(IngestError::CorruptSnapshot {
                    line: line_no,
                    message: "first line must be a header record".into(),
                })?;
                apply_record(corpus, &mut event_slots, other, line_no)?;
            }
        }
    }

    let corpus = corpus.ok_or(IngestError::CorruptSnapshot {
        line: 1,
        message: "empty snapshot: missing header".into(),
    })?;
    Ok(corpus)
}

fn apply_record(
    corpus: &mut Corpus,
    event_slots: &mut BTreeMap<(u64, String), usize>,
    record: SnapshotRecord,
    line_no: usize,
) -> Result<(), IngestError> {
    match record {
        SnapshotRecord::Header { .. } => unreachable!("handled by caller"),
        SnapshotRecord::Issue(mut issue) => {
            issue.tombstone = false;
            issue.validate().map_err(|e| IngestError::CorruptSnapshot {
                line: line_no,
                message: e.to_string(),
            })?;
            corpus.issues.insert(issue.number, issue);
        }
        SnapshotRecord::Tombstone(mut issue) => {
            issue.tombstone = true;
            corpus.issues.insert(issue.number, issue);
        }
        SnapshotRecord::TimelineEvent(event) => {
            let number = event.issue.number;
            let slot_key = (number, event.event_id.clone());
            let events = corpus.timelines.entry(number).or_default();
            match event_slots.get(&slot_key) {
                Some(&pos) => events[pos] = event,
                None => {
                    events.push(event);
                    event_slots.insert(slot_key, events.len() - 1);
                }
            }
        }
        SnapshotRecord::ContributorSet(set) => {
            corpus.contributors = Some(set);
        }
    }
    Ok(())
}

/// Append-only handle over a directory of per-repo snapshot files.
///
/// Writes for a given repository are serialized behind one lock; loads see
/// whatever has been flushed so far.
#[derive(Debug)]
pub struct SnapshotCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl SnapshotCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(SnapshotCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn path_for(&self, repo: &RepoRef) -> PathBuf {
        self.dir.join(format!("{}.jsonl", repo.slug()))
    }

    pub fn has_snapshot(&self, repo: &RepoRef) -> bool {
        self.path_for(repo).exists()
    }

    /// Create the file with its header if it does not exist yet.
    pub fn ensure_header(&self, repo: &RepoRef, fetched_at: DateTime<Utc>) -> Result<(), IngestError> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let path = self.path_for(repo);
        if path.exists() {
            return Ok(());
        }
        let header = SnapshotRecord::Header {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            repo: repo.clone(),
            fetched_at,
        };
        let mut file = File::create(&path)?;
        file.write_all(serde_json::to_string(&header)?.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(())
    }

    pub fn append_issue(&self, issue: &RawIssue) -> Result<(), IngestError> {
        let record = if issue.tombstone {
            SnapshotRecord::Tombstone(issue.clone())
        } else {
            SnapshotRecord::Issue(issue.clone())
        };
        self.append(&issue.repo, &record)
    }

    pub fn append_event(&self, event: &RawTimelineEvent) -> Result<(), IngestError> {
        self.append(&event.issue.repo, &SnapshotRecord::TimelineEvent(event.clone()))
    }

    pub fn append_contributors(&self, set: &ContributorSet) -> Result<(), IngestError> {
        self.append(&set.repo, &SnapshotRecord::ContributorSet(set.clone()))
    }

    /// Mark an issue deleted upstream, retaining its last known contents.
    pub fn append_tombstone_for(&self, key: &IssueKey) -> Result<(), IngestError> {
        let corpus = self.load(&key.repo)?;
        if let Some(issue) = corpus.issues.get(&key.number) {
            let mut tomb = issue.clone();
            tomb.tombstone = true;
            self.append_issue(&tomb)?;
        }
        Ok(())
    }

    pub fn load(&self, repo: &RepoRef) -> Result<Corpus, IngestError> {
        snapshot_load(&self.path_for(repo))
    }

    fn append(&self, repo: &RepoRef, record: &SnapshotRecord) -> Result<(), IngestError> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let path = self.path_for(repo);
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(serde_json::to_string(record)?.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(())
    }
}
