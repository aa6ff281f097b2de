//! Resumable answer cache: line-delimited JSON keyed by
//! (template version, config digest, repo, issue number).
//!
//! With the cache on, repeating a run or a sweep issues zero new backend
//! requests. Writes are serialized; lookups hit an in-memory index loaded at
//! open time.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::parse::ParseStatus;
use super::{LlmError, ModelAnswer};
use crate::context::TaskKind;
use crate::ingest::IssueKey;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub template_version: String,
    pub config_digest: String,
    pub repo: String,
    pub number: u64,
}

impl CacheKey {
    pub fn new(template_version: &str, config_digest: &str, issue: &IssueKey) -> Self {
        CacheKey {
            template_version: template_version.to_string(),
            config_digest: config_digest.to_string(),
            repo: issue.repo.to_string(),
            number: issue.number,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    template_version: String,
    config_digest: String,
    repo: String,
    number: u64,
    task: TaskKind,
    raw_text: String,
    parse_status: ParseStatus,
    #[serde(default)]
    parsed: Option<std::collections::BTreeMap<String, String>>,
    latency_ms: u64,
    model: String,
}

pub struct AnswerCache {
    path: PathBuf,
    index: Mutex<HashMap<CacheKey, ModelAnswer>>,
}

impl AnswerCache {
    /// Open (or create) a cache file, loading its index. Unreadable lines
    /// are skipped with a warning so a torn final write never blocks a
    /// resume.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let mut index = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(LlmError::CacheIo)?;
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(line) {
                    Ok(entry) => {
                        let key = CacheKey {
                            template_version: entry.template_version,
                            config_digest: entry.config_digest,
                            repo: entry.repo,
                            number: entry.number,
                        };
                        index.insert(
                            key,
                            ModelAnswer {
                                task: entry.task,
                                raw_text: entry.raw_text,
                                parsed: entry.parsed,
                                parse_status: entry.parse_status,
                                latency_ms: entry.latency_ms,
                            },
                        );
                    }
                    Err(e) => {
                        warn!(line = idx + 1, error = %e, "skipping unreadable answer-cache line");
                    }
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(LlmError::CacheIo)?;
        }
        Ok(AnswerCache {
            path,
            index: Mutex::new(index),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<ModelAnswer> {
        self.index.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: CacheKey, answer: &ModelAnswer, model: &str) -> Result<(), LlmError> {
        let line = CacheLine {
            template_version: key.template_version.clone(),
            config_digest: key.config_digest.clone(),
            repo: key.repo.clone(),
            number: key.number,
            task: answer.task,
            raw_text: answer.raw_text.clone(),
            parse_status: answer.parse_status,
            parsed: answer.parsed.clone(),
            latency_ms: answer.latency_ms,
            model: model.to_string(),
        };
        let mut guard = self.index.lock().expect("cache lock");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(LlmError::CacheIo)?;
        let mut text = serde_json::to_string(&line).map_err(|e| {
            LlmError::CacheIo(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        text.push('\n');
        file.write_all(text.as_bytes()).map_err(LlmError::CacheIo)?;
        file.flush().map_err(LlmError::CacheIo)?;
        guard.insert(key, answer.clone());
        Ok(())
    }
}
