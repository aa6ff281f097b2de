//! Run every (sampling config, context) pair against a backend, resuming
//! through the answer cache.

use std::collections::BTreeMap;

use futures::stream::{self, StreamExt};

use super::backend::{ChatBackend, SamplingConfig};
use super::cache::{AnswerCache, CacheKey};
use super::template::PromptTemplate;
use super::{LlmError, ModelAnswer};
use crate::context::ContextBlock;
use crate::ingest::IssueKey;

/// Answers (and per-item failures) for one grid cell.
#[derive(Debug)]
pub struct ConfigAnswers {
    pub config: SamplingConfig,
    pub answers: BTreeMap<IssueKey, ModelAnswer>,
    pub failures: BTreeMap<IssueKey, String>,
}

/// Results keyed by config digest.
pub type SweepAnswers = BTreeMap<String, ConfigAnswers>;

/// Run the full grid over the given contexts. Cache hits skip the backend
/// entirely; per-item failures are recorded, not fatal.
pub async fn sweep(
    backend: &ChatBackend,
    template: &PromptTemplate,
    contexts: &[(IssueKey, ContextBlock)],
    grid: &[SamplingConfig],
    cache: &AnswerCache,
    in_flight: usize,
) -> Result<SweepAnswers, LlmError> {
    if grid.is_empty() {
        return Err(LlmError::InvalidConfig("sweep grid must not be empty".into()));
    }
    let mut jobs = Vec::with_capacity(grid.len() * contexts.len());
    for config in grid {
        let digest = config.digest();
        for (key, context) in contexts {
            jobs.push((digest.clone(), config.clone(), key.clone(), context));
        }
    }

    let results: Vec<(String, SamplingConfig, IssueKey, Result<ModelAnswer, LlmError>)> =
        stream::iter(jobs)
            .map(|(digest, config, key, context)| async move {
                let cache_key = CacheKey::new(&template.version, &digest, &key);
                if let Some(hit) = cache.get(&cache_key) {
                    return (digest, config, key, Ok(hit));
                }
                let result = backend.complete(template, context, &config).await;
                if let Ok(answer) = &result {
                    if let Err(e) = cache.put(cache_key, answer, backend.model()) {
                        return (digest, config, key, Err(e));
                    }
                }
                (digest, config, key, result)
            })
            .buffer_unordered(in_flight.max(1))
            .collect()
            .await;

    let mut out: SweepAnswers = BTreeMap::new();
    for (digest, config, key, result) in results {
        let cell = out.entry(digest).or_insert_with(|| ConfigAnswers {
            config,
            answers: BTreeMap::new(),
            failures: BTreeMap::new(),
        });
        match result {
            Ok(answer) => {
                cell.answers.insert(key, answer);
            }
            Err(e) => {
                cell.failures.insert(key, e.to_string());
            }
        }
    }
    Ok(out)
}
