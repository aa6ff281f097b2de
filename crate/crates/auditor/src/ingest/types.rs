//! Domain types for mined repository data.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;

/// `owner/name` identity of a repository.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RepoRef {
    owner: String,
    name: String,
}

impl RepoRef {
    pub fn new(owner: impl Into<String>, name: impl Into<String>) -> Result<Self, IngestError> {
        let owner = owner.into();
        let name = name.into();
        if owner.is_empty() || name.is_empty() || owner.contains('/') || name.contains('/') {
            return Err(IngestError::InvalidRepo(format!("{owner}/{name}")));
        }
        Ok(RepoRef { owner, name })
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Filesystem-safe form used for cache file names.
    pub fn slug(&self) -> String {
        format!("{}__{}", self.owner, self.name)
    }
}

impl fmt::Display for RepoRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.owner, self.name)
    }
}

impl FromStr for RepoRef {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (owner, name) = s
            .split_once('/')
            .ok_or_else(|| IngestError::InvalidRepo(s.to_string()))?;
        RepoRef::new(owner, name)
    }
}

impl TryFrom<String> for RepoRef {
    type Error = IngestError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RepoRef> for String {
    fn from(r: RepoRef) -> String {
        r.to_string()
    }
}

/// (repo, issue number) — the key every stage of the audit is joined on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IssueKey {
    pub repo: RepoRef,
    pub number: u64,
}

impl fmt::Display for IssueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.repo, self.number)
    }
}

impl FromStr for IssueKey {
    type Err = IngestError;

    /// Parse `owner/name#123`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (repo, num) = s
            .split_once('#')
            .ok_or_else(|| IngestError::InvalidRepo(s.to_string()))?;
        let number: u64 = num
            .parse()
            .map_err(|_| IngestError::InvalidRepo(s.to_string()))?;
        Ok(IssueKey {
            repo: repo.parse()?,
            number,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueState {
    Open,
    Closed,
}

/// One GitHub issue as mined, pull requests included; filtering is
/// downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawIssue {
    pub repo: RepoRef,
    pub number: u64,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub labels: Vec<String>,
    pub state: IssueState,
    pub is_pull_request: bool,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<DateTime<Utc>>,
    pub author_login: String,
    /// Set when the issue was observed deleted on a later fetch; the last
    /// known version is retained under this flag.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tombstone: bool,
}

impl RawIssue {
    pub fn key(&self) -> IssueKey {
        IssueKey {
            repo: self.repo.clone(),
            number: self.number,
        }
    }

    /// `state == Closed ⇔ closed_at present`.
    pub fn validate(&self) -> Result<(), IngestError> {
        match (self.state, self.closed_at.is_some()) {
            (IssueState::Closed, false) => Err(IngestError::Schema(format!(
                "{}: closed issue without closed_at",
                self.key()
            ))),
            (IssueState::Open, true) => Err(IngestError::Schema(format!(
                "{}: open issue with closed_at",
                self.key()
            ))),
            _ => Ok(()),
        }
    }
}

/// One event from an issue's timeline. Unknown kinds are preserved, never
/// dropped; the raw wire object rides along in `payload`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTimelineEvent {
    pub issue: IssueKey,
    /// Stable identifier: the wire `id` when present, else
    /// `{issue_number}.{ordinal}` assigned at fetch time.
    pub event_id: String,
    pub event_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_login: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub payload: serde_json::Value,
}

/// Accounts listed as repository contributors, deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributorSet {
    pub repo: RepoRef,
    pub logins: std::collections::BTreeSet<String>,
    pub fetched_at: DateTime<Utc>,
}

impl ContributorSet {
    pub fn contains(&self, login: &str) -> bool {
        self.logins.contains(login)
    }
}

/// GitHub bot convention: `dependabot[bot]`, `github-actions[bot]`, ...
pub fn is_bot_login(login: &str) -> bool {
    login.ends_with("[bot]")
}
