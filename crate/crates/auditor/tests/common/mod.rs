//! Shared test support: a fake clock, a scripted GitHub wire-protocol mock,
//! a canned chat-completions mock, and the 30-issue fixture.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use auditor::framework::BugType;
use auditor::ingest::{Clock, Corpus, IssueKey, IssueState, RawIssue, RawTimelineEvent, RepoRef};
use auditor::pipeline::AnnotationFileRecord;

// ---------------------------------------------------------------------------
// Fake clock
// ---------------------------------------------------------------------------

/// Deterministic clock: `sleep` advances `now` instantly and records the
/// requested duration.
pub struct FakeClock {
    now: Mutex<DateTime<Utc>>,
    pub sleeps: Mutex<Vec<Duration>>,
}

impl FakeClock {
    pub fn at(start: &str) -> Arc<Self> {
        Arc::new(FakeClock {
            now: Mutex::new(start.parse().unwrap()),
            sleeps: Mutex::new(Vec::new()),
        })
    }

    pub fn current(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    pub fn total_slept(&self) -> Duration {
        self.sleeps.lock().unwrap().iter().sum()
    }
}

#[async_trait]
impl Clock for FakeClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    async fn sleep(&self, duration: Duration) {
        let mut now = self.now.lock().unwrap();
        *now += chrono::Duration::from_std(duration).unwrap();
        self.sleeps.lock().unwrap().push(duration);
    }
}

// ---------------------------------------------------------------------------
// GitHub wire-protocol mock
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RequestLog {
    pub path: String,
    pub page: usize,
    /// Fake-clock time when the request arrived.
    pub at: DateTime<Utc>,
}

pub struct GithubMockState {
    pub issues: Mutex<Vec<Value>>,
    pub timelines: Mutex<HashMap<u64, Vec<Value>>>,
    pub contributors: Mutex<Vec<Value>>,
    pub requests: Mutex<Vec<RequestLog>>,
    /// Issue-listing pages that return 500 while present.
    pub failing_pages: Mutex<HashSet<usize>>,
    /// Per-response (remaining, reset-epoch) rate-limit headers; empty means
    /// a large default budget.
    pub rate_script: Mutex<VecDeque<(u64, i64)>>,
    pub clock: Arc<FakeClock>,
}

impl GithubMockState {
    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn issue_page_requests(&self) -> Vec<RequestLog> {
        self.requests
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.path.ends_with("/issues"))
            .cloned()
            .collect()
    }
}

pub struct GithubMock {
    pub base_url: String,
    pub state: Arc<GithubMockState>,
}

fn page_of(items: &[Value], page: usize, per_page: usize) -> Vec<Value> {
    let start = (page - 1) * per_page;
    items.iter().skip(start).take(per_page).cloned().collect()
}

fn rate_headers(state: &GithubMockState) -> [(String, String); 2] {
    let mut script = state.rate_script.lock().unwrap();
    let (remaining, reset) = script
        .pop_front()
        .unwrap_or((4000, (state.clock.current() + chrono::Duration::hours(1)).timestamp()));
    [
        ("x-ratelimit-remaining".to_string(), remaining.to_string()),
        ("x-ratelimit-reset".to_string(), reset.to_string()),
    ]
}

async fn issues_handler(
    State(state): State<Arc<GithubMockState>>,
    Path((owner, repo)): Path<(String, String)>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let page: usize = params.get("page").and_then(|p| p.parse().ok()).unwrap_or(1);
    let per_page: usize = params
        .get("per_page")
        .and_then(|p| p.parse().ok())
        .unwrap_or(30);
    state.requests.lock().unwrap().push(RequestLog {
        path: format!("/repos/{owner}/{repo}/issues"),
        page,
        at: state.clock.current(),
    });
    let headers = rate_headers(&state);
    if state.failing_pages.lock().unwrap().contains(&page) {
        return (StatusCode::INTERNAL_SERVER_ERROR, headers, "boom").into_response();
    }
    let body = page_of(&state.issues.lock().unwrap(), page, per_page);
    (StatusCode::OK, headers, Json(body)).into_response()
}

async fn timeline_handler(
    State(state): State<Arc<GithubMockState>>,
    Path((owner, repo, number)): Path<(String, String, u64)>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let page: usize = params.get("page").and_then(|p| p.parse().ok()).unwrap_or(1);
    let per_page: usize = params
        .get("per_page")
        .and_then(|p| p.parse().ok())
        .unwrap_or(30);
    state.requests.lock().unwrap().push(RequestLog {
        path: format!("/repos/{owner}/{repo}/issues/{number}/timeline"),
        page,
        at: state.clock.current(),
    });
    let headers = rate_headers(&state);
    let timelines = state.timelines.lock().unwrap();
    match timelines.get(&number) {
        Some(events) => {
            let body = page_of(events, page, per_page);
            (StatusCode::OK, headers, Json(body)).into_response()
        }
        None => (StatusCode::GONE, headers, "deleted").into_response(),
    }
}

async fn contributors_handler(
    State(state): State<Arc<GithubMockState>>,
    Path((owner, repo)): Path<(String, String)>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let page: usize = params.get("page").and_then(|p| p.parse().ok()).unwrap_or(1);
    let per_page: usize = params
        .get("per_page")
        .and_then(|p| p.parse().ok())
        .unwrap_or(30);
    state.requests.lock().unwrap().push(RequestLog {
        path: format!("/repos/{owner}/{repo}/contributors"),
        page,
        at: state.clock.current(),
    });
    let headers = rate_headers(&state);
    let body = page_of(&state.contributors.lock().unwrap(), page, per_page);
    (StatusCode::OK, headers, Json(body)).into_response()
}

pub async fn spawn_github_mock(clock: Arc<FakeClock>) -> GithubMock {
    let state = Arc::new(GithubMockState {
        issues: Mutex::new(Vec::new()),
        timelines: Mutex::new(HashMap::new()),
        contributors: Mutex::new(Vec::new()),
        requests: Mutex::new(Vec::new()),
        failing_pages: Mutex::new(HashSet::new()),
        rate_script: Mutex::new(VecDeque::new()),
        clock,
    });
    let app = Router::new()
        .route("/repos/{owner}/{repo}/issues", get(issues_handler))
        .route(
            "/repos/{owner}/{repo}/issues/{number}/timeline",
            get(timeline_handler),
        )
        .route(
            "/repos/{owner}/{repo}/contributors",
            get(contributors_handler),
        )
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    GithubMock { base_url, state }
}

/// Wire-shaped issue object for the mock server.
pub fn wire_issue(number: u64, title: &str, labels: &[&str], state: &str, is_pr: bool) -> Value {
    let mut obj = json!({
        "number": number,
        "title": title,
        "body": format!("body of issue {number}"),
        "state": state,
        "created_at": "2019-06-01T00:00:00Z",
        "closed_at": if state == "closed" { Some("2019-07-01T00:00:00Z") } else { None },
        "labels": labels.iter().map(|l| json!({"name": l})).collect::<Vec<_>>(),
        "user": {"login": "reporter"},
    });
    if is_pr {
        obj["pull_request"] = json!({"url": "https://example.invalid/pr"});
    }
    obj
}

// ---------------------------------------------------------------------------
// Chat-completions mock
// ---------------------------------------------------------------------------

pub struct ChatMockState {
    pub requests: AtomicUsize,
}

pub struct ChatMock {
    /// Full endpoint URL, ready for `AUDITOR_LLM_ENDPOINT`.
    pub endpoint: String,
    pub state: Arc<ChatMockState>,
}

impl ChatMock {
    pub fn request_count(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }
}

/// Answer per the directive embedded in the user content: issues in test
/// fixtures carry `mock-bugid: <raw>` / `mock-resp: <raw>` lines in their
/// bodies, and the mock echoes the payload for whichever stage the system
/// prompt belongs to. No directive yields free prose (unparseable).
async fn chat_handler(
    State(state): State<Arc<ChatMockState>>,
    Json(body): Json<Value>,
) -> Response {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let messages = body["messages"].as_array().cloned().unwrap_or_default();
    let system = messages
        .first()
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let user = messages
        .iter()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let directive = if system.contains("is_duplicate") {
        "mock-resp:"
    } else {
        "mock-bugid:"
    };
    let content = user
        .lines()
        .find_map(|line| {
            line.find(directive)
                .map(|pos| line[pos + directive.len()..].trim().to_string())
        })
        .unwrap_or_else(|| "I do not have enough information to answer.".to_string());
    Json(json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    }))
    .into_response()
}

async fn chat_count_handler(State(state): State<Arc<ChatMockState>>) -> String {
    state.requests.load(Ordering::SeqCst).to_string()
}

pub async fn spawn_chat_mock() -> ChatMock {
    let state = Arc::new(ChatMockState {
        requests: AtomicUsize::new(0),
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(chat_handler))
        .route("/__requests", get(chat_count_handler))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    ChatMock {
        endpoint: format!("http://{addr}/v1/chat/completions"),
        state,
    }
}

// ---------------------------------------------------------------------------
// The 30-issue fixture
// ---------------------------------------------------------------------------

/// Fixture issue plan: 1–6 PRs, 7–10 open, 11–30 closed non-PR; 11–22 bugs
/// (11–12 duplicates, 13–18 responsive external, 19 not-responsive external,
/// 20 not-responsive unknown, 21–22 not-applicable internal), 23–30
/// non-bugs. Hand-derived funnel: 30 → 24 → 20 → 20 → 12 → 12 → 10.
pub struct ThirtyIssueFixture {
    pub repo: RepoRef,
    pub corpus: Corpus,
    pub annotations: Vec<AnnotationFileRecord>,
}

pub fn thirty_issue_fixture(repo_name: &str) -> ThirtyIssueFixture {
    let repo: RepoRef = repo_name.parse().unwrap();
    let mut corpus = Corpus::new(repo.clone(), "2025-01-01T00:00:00Z".parse().unwrap());
    let mut annotations = Vec::new();

    for n in 1..=30u64 {
        let is_pr = n <= 6;
        let open = (7..=10).contains(&n);
        let is_bug = (11..=22).contains(&n);
        let is_duplicate = is_bug && n <= 12;
        let fields = (is_bug && !is_duplicate).then_some(match n {
            13..=18 => (BugType::External, true),
            19 => (BugType::External, false),
            20 => (BugType::Unknown, false),
            _ => (BugType::Internal, false),
        });
        annotations.push(AnnotationFileRecord {
            repo: repo.clone(),
            number: n,
            is_bug,
            is_duplicate,
            is_complex: false,
            bug_type: fields.map(|(t, _)| t),
            was_fixed: fields.map(|(_, f)| f),
        });

        // Bodies carry the canned answers the chat mock echoes back.
        let mut body = String::new();
        body.push_str(&format!(
            "mock-bugid: {{\"classification\": \"{}\"}}\n",
            if is_bug { "bug" } else { "not_bug" }
        ));
        if is_duplicate {
            body.push_str("mock-resp: {\"is_duplicate\": true}\n");
        } else if let Some((bug_type, was_fixed)) = fields {
            body.push_str(&format!(
                "mock-resp: {{\"is_duplicate\": false, \"bug_type\": \"{}\", \"was_fixed\": {was_fixed}}}\n",
                bug_type.ident()
            ));
        }
        body.push_str(&format!("Observed misbehavior in component {n}.\n"));

        let created: DateTime<Utc> = "2019-06-01T00:00:00Z".parse().unwrap();
        let issue = RawIssue {
            repo: repo.clone(),
            number: n,
            title: format!("issue {n}"),
            body,
            // Even-numbered bugs carry the `bug` label, plus open issue 9,
            // so every regex-funnel stage excludes something.
            labels: if (is_bug && n % 2 == 0) || n == 9 {
                vec!["bug".to_string()]
            } else {
                vec!["question".to_string()]
            },
            state: if open { IssueState::Open } else { IssueState::Closed },
            is_pull_request: is_pr,
            created_at: created,
            closed_at: (!open).then(|| "2019-07-01T00:00:00Z".parse().unwrap()),
            author_login: "reporter".to_string(),
            tombstone: false,
        };
        corpus.issues.insert(n, issue);
        corpus.timelines.insert(
            n,
            vec![RawTimelineEvent {
                issue: IssueKey {
                    repo: repo.clone(),
                    number: n,
                },
                event_id: format!("{n}.0"),
                event_kind: "closed".to_string(),
                actor_login: Some("maintainer".to_string()),
                created_at: "2019-07-01T00:00:00Z".parse().unwrap(),
                payload: Value::Null,
            }],
        );
    }
    corpus.contributors = Some(auditor::ingest::ContributorSet {
        repo: repo.clone(),
        logins: ["maintainer".to_string()].into_iter().collect(),
        fetched_at: "2025-01-01T00:00:00Z".parse().unwrap(),
    });

    ThirtyIssueFixture {
        repo,
        corpus,
        annotations,
    }
}

/// Expected stage (input, output) pairs for the 30-issue fixture.
pub fn thirty_issue_expected_stages() -> BTreeMap<&'static str, (usize, usize)> {
    [
        ("ingest", (30, 30)),
        ("exclude_prs", (30, 24)),
        ("require_closed", (24, 20)),
        ("window", (20, 20)),
        ("bug_identification", (20, 12)),
        ("responsiveness", (12, 12)),
        ("derive_verdict", (12, 10)),
    ]
    .into_iter()
    .collect()
}
