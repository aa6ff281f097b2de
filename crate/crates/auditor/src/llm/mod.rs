//! Drive any chat-completion backend over HTTP: render instruction
//! templates, enforce the structured-output contracts, parse and validate
//! model answers, and manage sampling configuration.

mod backend;
mod cache;
mod parse;
mod sweep;
mod template;

pub use backend::{
    default_sweep_grid, ChatBackend, SamplingConfig, ENDPOINT_ENV, MODEL_ENV, TOKEN_ENV,
};
pub use cache::{AnswerCache, CacheKey};
pub use parse::{parse_answer, serialize_answer, ParseOutcome, ParseStatus};
pub use sweep::{sweep, ConfigAnswers, SweepAnswers};
pub use template::{
    load_templates, OutputSchema, PromptTemplate, DEFAULT_BUGID_TEMPLATE,
    DEFAULT_RESPONSIVENESS_TEMPLATE,
};

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use crate::context::TaskKind;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("context too large: estimated {estimate} tokens exceeds backend limit {limit}")]
    ContextTooLarge { estimate: u32, limit: u32 },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("answer cache I/O: {0}")]
    CacheIo(#[source] std::io::Error),
}

/// One model reply, raw and parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAnswer {
    pub task: TaskKind,
    pub raw_text: String,
    pub parsed: Option<BTreeMap<String, String>>,
    pub parse_status: ParseStatus,
    pub latency_ms: u64,
}

impl ModelAnswer {
    pub fn is_parsed(&self) -> bool {
        self.parse_status != ParseStatus::Unparseable
    }

    /// Convenience accessor over the canonicalized value map.
    pub fn field(&self, name: &str) -> Option<&str> {
        self.parsed.as_ref()?.get(name).map(String::as_str)
    }
}
