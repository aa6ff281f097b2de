//! GitHub REST v3 client: pagination, retry with exponential backoff, and a
//! shared rate-limit budget that always defers to `X-RateLimit-Remaining` /
//! `X-RateLimit-Reset`.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, TimeZone, Utc};
use reqwest::StatusCode;
use serde_json::Value;
use tracing::{debug, warn};

use super::snapshot::SnapshotCache;
use super::types::{ContributorSet, IssueKey, IssueState, RawIssue, RawTimelineEvent, RepoRef};
use super::IngestError;

pub const GITHUB_TOKEN_ENV: &str = "AUDITOR_GITHUB_TOKEN";
pub const DEFAULT_BASE_URL: &str = "https://api.github.com";
const PER_PAGE: usize = 100;

/// Time source, injectable so rate-limit behavior is testable against a
/// faked clock.
#[async_trait]
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    async fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default)]
pub struct SystemClock;

#[async_trait]
impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    async fn sleep(&self, duration: Duration) {
        tokio::time::sleep(duration).await;
    }
}

/// Retry policy for transport failures: base 1s doubling to a 64s cap, five
/// attempts total.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub base: Duration,
    pub cap: Duration,
    pub attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(64),
            attempts: 5,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base.saturating_mul(2u32.saturating_pow(attempt));
        exp.min(self.cap)
    }
}

/// Remaining-quota tracker shared by every request the client makes.
#[derive(Debug, Default)]
struct RateBudget {
    remaining: Option<u64>,
    reset_at: Option<DateTime<Utc>>,
}

pub struct GithubClient {
    http: reqwest::Client,
    base_url: String,
    token: Option<String>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    wait_on_rate_limit: bool,
    budget: Arc<Mutex<RateBudget>>,
}

pub struct GithubClientBuilder {
    base_url: String,
    token: Option<String>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    wait_on_rate_limit: bool,
}

impl GithubClientBuilder {
    pub fn base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    pub fn token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// `false` mirrors `--no-wait`: a zeroed budget surfaces `RateLimited`
    /// instead of sleeping until the advertised reset.
    pub fn wait_on_rate_limit(mut self, wait: bool) -> Self {
        self.wait_on_rate_limit = wait;
        self
    }

    pub fn build(self) -> Result<GithubClient, IngestError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| IngestError::Transport(e.to_string()))?;
        Ok(GithubClient {
            http,
            base_url: self.base_url.trim_end_matches('/').to_string(),
            token: self.token,
            clock: self.clock,
            retry: self.retry,
            wait_on_rate_limit: self.wait_on_rate_limit,
            budget: Arc::new(Mutex::new(RateBudget::default())),
        })
    }
}

impl GithubClient {
    pub fn builder() -> GithubClientBuilder {
        GithubClientBuilder {
            base_url: DEFAULT_BASE_URL.to_string(),
            token: std::env::var(GITHUB_TOKEN_ENV).ok(),
            clock: Arc::new(SystemClock),
            retry: RetryPolicy::default(),
            wait_on_rate_limit: true,
        }
    }

    /// Fetch every issue (pull requests included — filtering is downstream)
    /// updated at/after `since`, appending each record to the cache as it
    /// arrives. The returned list is ascending by issue number.
    pub async fn fetch_issues(
        &self,
        repo: &RepoRef,
        since: Option<DateTime<Utc>>,
        cache: &SnapshotCache,
    ) -> Result<Vec<RawIssue>, IngestError> {
        cache.ensure_header(repo, self.clock.now())?;
        let url = format!("{}/repos/{}/{}/issues", self.base_url, repo.owner(), repo.name());
        let mut out = Vec::new();
        for page in 1.. {
            let mut query = vec![
                ("state".to_string(), "all".to_string()),
                ("per_page".to_string(), PER_PAGE.to_string()),
                ("page".to_string(), page.to_string()),
            ];
            if let Some(since) = since {
                query.push(("since".to_string(), since.to_rfc3339()));
            }
            let body = self.get_json(&url, &query).await?;
            let items = body.as_array().cloned().unwrap_or_default();
            let count = items.len();
            for item in items {
                let issue = parse_issue(repo, &item)?;
                cache.append_issue(&issue)?;
                out.push(issue);
            }
            if count < PER_PAGE {
                break;
            }
        }
        out.sort_by_key(|i| i.number);
        Ok(out)
    }

    /// All timeline events for one issue, chronological. A deleted issue
    /// (410 Gone) yields an empty list and a tombstone record in the cache.
    pub async fn fetch_timeline(
        &self,
        repo: &RepoRef,
        issue_number: u64,
        cache: &SnapshotCache,
    ) -> Result<Vec<RawTimelineEvent>, IngestError> {
        cache.ensure_header(repo, self.clock.now())?;
        let url = format!(
            "{}/repos/{}/{}/issues/{}/timeline",
            self.base_url,
            repo.owner(),
            repo.name(),
            issue_number
        );
        let key = IssueKey {
            repo: repo.clone(),
            number: issue_number,
        };
        let mut events = Vec::new();
        for page in 1.. {
            let query = vec![
                ("per_page".to_string(), PER_PAGE.to_string()),
                ("page".to_string(), page.to_string()),
            ];
            let body = match self.get_json(&url, &query).await {
                Ok(body) => body,
                Err(IngestError::Gone) => {
                    warn!(issue = %key, "issue deleted upstream; recording tombstone");
                    cache.append_tombstone_for(&key)?;
                    return Ok(Vec::new());
                }
                Err(e) => return Err(e),
            };
            let items = body.as_array().cloned().unwrap_or_default();
            let count = items.len();
            for (offset, item) in items.into_iter().enumerate() {
                let seq = (page - 1) * PER_PAGE + offset;
                events.push(parse_event(&key, seq, item));
            }
            if count < PER_PAGE {
                break;
            }
        }
        // Chronological; stable so ties keep wire order.
        events.sort_by_key(|e| e.created_at);
        for event in &events {
            cache.append_event(event)?;
        }
        Ok(events)
    }

    /// Deduplicated contributor logins, cached with the fetch timestamp.
    pub async fn fetch_contributors(
        &self,
        repo: &RepoRef,
        cache: &SnapshotCache,
    ) -> Result<ContributorSet, IngestError> {
        cache.ensure_header(repo, self.clock.now())?;
        let url = format!(
            "{}/repos/{}/{}/contributors",
            self.base_url,
            repo.owner(),
            repo.name()
        );
        let mut logins = std::collections::BTreeSet::new();
        for page in 1.. {
            let query = vec![
                ("per_page".to_string(), PER_PAGE.to_string()),
                ("page".to_string(), page.to_string()),
            ];
            let body = self.get_json(&url, &query).await?;
            let items = body.as_array().cloned().unwrap_or_default();
            let count = items.len();
            for item in &items {
                if let Some(login) = item.get("login").and_then(Value::as_str) {
                    logins.insert(login.to_string());
                }
            }
            if count < PER_PAGE {
                break;
            }
        }
        let set = ContributorSet {
            repo: repo.clone(),
            logins,
            fetched_at: self.clock.now(),
        };
        cache.append_contributors(&set)?;
        Ok(set)
    }

    /// One GET with budget gating, header tracking, and retry on transport
    /// failures. Rate-limit sleeps do not consume retry attempts.
    async fn get_json(&self, url: &str, query: &[(String, String)]) -> Result<Value, IngestError> {
        let mut attempt = 0u32;
        loop {
            self.gate_on_budget().await?;
            let mut request = self
                .http
                .get(url)
                .query(query)
                .header("User-Agent", concat!("auditor/", env!("CARGO_PKG_VERSION")))
                .header("Accept", "application/vnd.github+json");
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            match request.send().await {
                Ok(resp) => {
                    self.update_budget(resp.headers());
                    let status = resp.status();
                    match status {
                        StatusCode::OK => {
                            return resp
                                .json::<Value>()
                                .await
                                .map_err(|e| IngestError::Transport(e.to_string()));
                        }
                        StatusCode::UNAUTHORIZED => return Err(IngestError::Auth),
                        StatusCode::NOT_FOUND => return Err(IngestError::NotFound(url.to_string())),
                        StatusCode::GONE => return Err(IngestError::Gone),
                        StatusCode::FORBIDDEN | StatusCode::TOO_MANY_REQUESTS => {
                            let exhausted = {
                                let budget = self.budget.lock().expect("budget lock");
                                budget.remaining == Some(0)
                            };
                            if exhausted {
                                // Quota ran out mid-flight; the gate handles
                                // the wait on the next iteration.
                                if !self.wait_on_rate_limit {
                                    let reset_at = self
                                        .budget
                                        .lock()
                                        .expect("budget lock")
                                        .reset_at
                                        .unwrap_or_else(|| self.clock.now());
                                    return Err(IngestError::RateLimited { reset_at });
                                }
                                continue;
                            }
                            return Err(IngestError::Auth);
                        }
                        s if s.is_server_error() => {
                            debug!(%status, url, attempt, "server error, backing off");
                        }
                        other => {
                            return Err(IngestError::Transport(format!(
                                "unexpected status {other} for {url}"
                            )));
                        }
                    }
                }
                Err(e) => {
                    debug!(error = %e, url, attempt, "transport error, backing off");
                }
            }
            attempt += 1;
            if attempt >= self.retry.attempts {
                return Err(IngestError::Transport(format!(
                    "giving up on {url} after {attempt} attempts"
                )));
            }
            self.clock.sleep(self.retry.delay(attempt - 1)).await;
        }
    }

    /// Never issue a request while the tracked remaining quota is 0 before
    /// the advertised reset time.
    async fn gate_on_budget(&self) -> Result<(), IngestError> {
        loop {
            let (exhausted, reset_at) = {
                let budget = self.budget.lock().expect("budget lock");
                (budget.remaining == Some(0), budget.reset_at)
            };
            if !exhausted {
                return Ok(());
            }
            let now = self.clock.now();
            let reset_at = reset_at.unwrap_or(now);
            if reset_at <= now {
                // Reset has passed; clear the stale zero and proceed.
                self.budget.lock().expect("budget lock").remaining = None;
                return Ok(());
            }
            if !self.wait_on_rate_limit {
                return Err(IngestError::RateLimited { reset_at });
            }
            let wait = (reset_at - now)
                .to_std()
                .unwrap_or(Duration::from_secs(1))
                + Duration::from_secs(1);
            warn!(until = %reset_at, "rate limit exhausted; sleeping");
            self.clock.sleep(wait).await;
            self.budget.lock().expect("budget lock").remaining = None;
        }
    }

    fn update_budget(&self, headers: &reqwest::header::HeaderMap) {
        let parse = |name: &str| -> Option<u64> {
            headers
                .get(name)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok())
        };
        let mut budget = self.budget.lock().expect("budget lock");
        if let Some(remaining) = parse("x-ratelimit-remaining") {
            budget.remaining = Some(remaining);
        }
        if let Some(reset) = parse("x-ratelimit-reset") {
            budget.reset_at = Utc.timestamp_opt(reset as i64, 0).single();
        }
    }
}

fn parse_issue(repo: &RepoRef, item: &Value) -> Result<RawIssue, IngestError> {
    let number = item
        .get("number")
        .and_then(Value::as_u64)
        .ok_or_else(|| IngestError::Schema("issue without number".into()))?;
    let state = match item.get("state").and_then(Value::as_str) {
        Some("open") => IssueState::Open,
        Some("closed") => IssueState::Closed,
        other => {
            return Err(IngestError::Schema(format!(
                "issue #{number}: unknown state {other:?}"
            )))
        }
    };
    let created_at: DateTime<Utc> = item
        .get("created_at")
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IngestError::Schema(format!("issue #{number}: bad created_at")))?;
    let closed_at = item
        .get("closed_at")
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok());
    let labels = item
        .get("labels")
        .and_then(Value::as_array)
        .map(|ls| {
            ls.iter()
                .filter_map(|l| match l {
                    Value::String(s) => Some(s.clone()),
                    other => other.get("name").and_then(Value::as_str).map(str::to_string),
                })
                .collect()
        })
        .unwrap_or_default();
    let issue = RawIssue {
        repo: repo.clone(),
        number,
        title: item
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        body: item
            .get("body")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        labels,
        state,
        is_pull_request: item.get("pull_request").is_some(),
        created_at,
        closed_at,
        author_login: item
            .pointer("/user/login")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        tombstone: false,
    };
    issue.validate()?;
    Ok(issue)
}

fn parse_event(key: &IssueKey, seq: usize, item: Value) -> RawTimelineEvent {
    let event_kind = item
        .get("event")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let event_id = item
        .get("id")
        .map(|id| match id {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_else(|| format!("{}.{seq}", key.number));
    let actor_login = item
        .pointer("/actor/login")
        .or_else(|| item.pointer("/user/login"))
        .and_then(Value::as_str)
        .map(str::to_string);
    // `committed` items carry committer.date instead of created_at.
    let created_at = item
        .get("created_at")
        .or_else(|| item.pointer("/committer/date"))
        .or_else(|| item.get("submitted_at"))
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| Utc.timestamp_opt(0, 0).single().expect("epoch"));
    RawTimelineEvent {
        issue: key.clone(),
        event_id,
        event_kind,
        actor_login,
        created_at,
        payload: item,
    }
}
