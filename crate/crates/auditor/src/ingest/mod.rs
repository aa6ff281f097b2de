//! Fetch and cache issues, timeline events, and contributor lists from the
//! GitHub REST wire protocol, with pagination, rate-limit budgeting, and
//! resumable on-disk snapshots.

mod client;
mod snapshot;
mod types;

pub use client::{
    Clock, GithubClient, GithubClientBuilder, RetryPolicy, SystemClock, DEFAULT_BASE_URL,
    GITHUB_TOKEN_ENV,
};
pub use snapshot::{snapshot_load, snapshot_store, Corpus, SnapshotCache, SNAPSHOT_SCHEMA_VERSION};
pub use types::{
    is_bot_login, ContributorSet, IssueKey, IssueState, RawIssue, RawTimelineEvent, RepoRef,
};

use chrono::{DateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("authentication failed (check {GITHUB_TOKEN_ENV})")]
    Auth,
    #[error("rate limited until {reset_at}")]
    RateLimited { reset_at: DateTime<Utc> },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("resource deleted upstream")]
    Gone,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid repo reference: {0}")]
    InvalidRepo(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("corrupt snapshot at line {line}: {message}")]
    CorruptSnapshot { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
