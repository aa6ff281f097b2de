//! GitHub client behavior against the scripted wire-protocol mock:
//! pagination, dedup, timeline ordering, deletion tombstones, resumability,
//! and rate-limit gating under a faked clock.

mod common;

use std::sync::Arc;
use std::time::Duration;

use auditor::ingest::{GithubClient, IngestError, RepoRef, RetryPolicy, SnapshotCache};
use common::{spawn_github_mock, wire_issue, FakeClock};
use serde_json::json;

fn client_for(mock: &common::GithubMock, clock: Arc<FakeClock>, wait: bool) -> GithubClient {
    GithubClient::builder()
        .base_url(&mock.base_url)
        .token(None)
        .clock(clock)
        .retry(RetryPolicy {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(64),
            attempts: 5,
        })
        .wait_on_rate_limit(wait)
        .build()
        .unwrap()
}

#[tokio::test]
async fn empty_repo_yields_header_only_cache() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    let repo: RepoRef = "acme/empty".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let issues = client_for(&mock, clock, true)
        .fetch_issues(&repo, None, &cache)
        .await
        .unwrap();
    assert!(issues.is_empty());

    let text = std::fs::read_to_string(cache.path_for(&repo)).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"record_kind\":\"header\""));
}

#[tokio::test]
async fn one_hundred_fifty_issues_paginate_in_two_requests() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        for n in 1..=150u64 {
            issues.push(wire_issue(n, &format!("t{n}"), &["bug"], "closed", false));
        }
    }
    let repo: RepoRef = "acme/paged".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let issues = client_for(&mock, clock, true)
        .fetch_issues(&repo, None, &cache)
        .await
        .unwrap();

    // Oracle: direct enumeration of the fixture.
    assert_eq!(issues.len(), 150);
    let numbers: Vec<u64> = issues.iter().map(|i| i.number).collect();
    let expected: Vec<u64> = (1..=150).collect();
    assert_eq!(numbers, expected, "ascending by issue number");
    assert_eq!(mock.state.issue_page_requests().len(), 2);

    let corpus = cache.load(&repo).unwrap();
    assert_eq!(corpus.issues.len(), 150);
}

#[tokio::test]
async fn contributors_deduplicate_across_pages() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut contributors = mock.state.contributors.lock().unwrap();
        contributors.push(json!({"login": "a"}));
        contributors.push(json!({"login": "b"}));
        contributors.push(json!({"login": "b"}));
    }
    let repo: RepoRef = "acme/dup".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let set = client_for(&mock, clock, true)
        .fetch_contributors(&repo, &cache)
        .await
        .unwrap();
    let logins: Vec<&str> = set.logins.iter().map(String::as_str).collect();
    assert_eq!(logins, vec!["a", "b"]);
}

#[tokio::test]
async fn two_hundred_thirty_contributors_need_three_requests() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut contributors = mock.state.contributors.lock().unwrap();
        for n in 0..230 {
            contributors.push(json!({"login": format!("user{n:03}")}));
        }
    }
    let repo: RepoRef = "acme/many".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let set = client_for(&mock, clock, true)
        .fetch_contributors(&repo, &cache)
        .await
        .unwrap();
    assert_eq!(set.logins.len(), 230);
    assert_eq!(mock.state.request_count(), 3);
}

#[tokio::test]
async fn empty_contributor_list_is_valid() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    let repo: RepoRef = "acme/solo".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();
    let set = client_for(&mock, clock, true)
        .fetch_contributors(&repo, &cache)
        .await
        .unwrap();
    assert!(set.logins.is_empty());
}

#[tokio::test]
async fn timeline_events_arrive_in_order_with_unknown_kinds_preserved() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        issues.push(wire_issue(1, "t", &["bug"], "closed", false));
        let mut timelines = mock.state.timelines.lock().unwrap();
        // 5 comments, 1 label, 1 close — 7 events, timestamps non-decreasing.
        let mut events = Vec::new();
        for i in 0..5 {
            events.push(json!({
                "event": "commented",
                "actor": {"login": format!("u{i}")},
                "created_at": format!("2019-06-0{}T00:00:00Z", i + 1),
                "body": format!("comment {i}"),
            }));
        }
        events.push(json!({
            "event": "labeled",
            "actor": {"login": "m"},
            "created_at": "2019-06-06T00:00:00Z",
            "label": {"name": "bug"},
        }));
        events.push(json!({
            "event": "some_future_event_kind",
            "actor": {"login": "m"},
            "created_at": "2019-06-07T00:00:00Z",
        }));
        timelines.insert(1, events);
    }
    let repo: RepoRef = "acme/tl".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();
    let client = client_for(&mock, clock, true);
    client.fetch_issues(&repo, None, &cache).await.unwrap();

    let events = client.fetch_timeline(&repo, 1, &cache).await.unwrap();
    assert_eq!(events.len(), 7);
    for pair in events.windows(2) {
        assert!(pair[0].created_at <= pair[1].created_at);
    }
    // pass-through contract for kinds this tool does not know
    assert!(events.iter().any(|e| e.event_kind == "some_future_event_kind"));

    // after a full snapshot every cached event refers to a cached issue
    let corpus = cache.load(&repo).unwrap();
    corpus.validate_references().unwrap();
}

#[tokio::test]
async fn deleted_issue_timeline_yields_empty_list_and_tombstone() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        issues.push(wire_issue(9, "gone later", &["bug"], "closed", false));
        // no timeline entry → mock answers 410
    }
    let repo: RepoRef = "acme/gone".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();
    let client = client_for(&mock, clock, true);
    client.fetch_issues(&repo, None, &cache).await.unwrap();

    let events = client.fetch_timeline(&repo, 9, &cache).await.unwrap();
    assert!(events.is_empty());
    let corpus = cache.load(&repo).unwrap();
    assert!(corpus.issues[&9].tombstone);
}

#[tokio::test]
async fn interrupted_ingestion_resumes_to_the_same_cache() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        for n in 1..=250u64 {
            issues.push(wire_issue(n, &format!("t{n}"), &["bug"], "closed", false));
        }
    }
    let repo: RepoRef = "acme/resume".parse().unwrap();

    // Uninterrupted reference run.
    let dir_a = tempfile::tempdir().unwrap();
    let cache_a = SnapshotCache::open(dir_a.path()).unwrap();
    client_for(&mock, clock.clone(), true)
        .fetch_issues(&repo, None, &cache_a)
        .await
        .unwrap();
    let reference = cache_a.load(&repo).unwrap();
    assert_eq!(reference.issues.len(), 250);

    // Interrupted run: page 3 fails until the retries are exhausted.
    mock.state.failing_pages.lock().unwrap().insert(3);
    let dir_b = tempfile::tempdir().unwrap();
    let cache_b = SnapshotCache::open(dir_b.path()).unwrap();
    let client = client_for(&mock, clock.clone(), true);
    let err = client.fetch_issues(&repo, None, &cache_b).await.unwrap_err();
    assert!(matches!(err, IngestError::Transport(_)));
    let partial = cache_b.load(&repo).unwrap();
    assert_eq!(partial.issues.len(), 200, "two pages landed before the failure");

    // Resume after the outage clears.
    mock.state.failing_pages.lock().unwrap().clear();
    client.fetch_issues(&repo, None, &cache_b).await.unwrap();
    let resumed = cache_b.load(&repo).unwrap();

    assert_eq!(resumed.issues, reference.issues);
    assert_eq!(resumed.timelines, reference.timelines);
    assert_eq!(resumed.contributors, reference.contributors);
}

#[tokio::test]
async fn exhausted_budget_delays_the_next_request_past_reset() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let start = clock.current();
    let reset_at = start + chrono::Duration::seconds(60);
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        for n in 1..=150u64 {
            issues.push(wire_issue(n, &format!("t{n}"), &["bug"], "closed", false));
        }
        // First response advertises a zeroed budget.
        mock.state
            .rate_script
            .lock()
            .unwrap()
            .push_back((0, reset_at.timestamp()));
    }
    let repo: RepoRef = "acme/limited".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let issues = client_for(&mock, clock.clone(), true)
        .fetch_issues(&repo, None, &cache)
        .await
        .unwrap();
    assert_eq!(issues.len(), 150);

    let log = mock.state.issue_page_requests();
    assert_eq!(log.len(), 2);
    assert!(log[0].at < reset_at);
    assert!(
        log[1].at >= reset_at,
        "second request at {} before reset {reset_at}",
        log[1].at
    );
    assert!(clock.total_slept() >= Duration::from_secs(60));
}

#[tokio::test]
async fn no_wait_surfaces_rate_limited() {
    let clock = FakeClock::at("2025-01-01T00:00:00Z");
    let reset_at = clock.current() + chrono::Duration::seconds(60);
    let mock = spawn_github_mock(clock.clone()).await;
    {
        let mut issues = mock.state.issues.lock().unwrap();
        for n in 1..=150u64 {
            issues.push(wire_issue(n, &format!("t{n}"), &["bug"], "closed", false));
        }
        mock.state
            .rate_script
            .lock()
            .unwrap()
            .push_back((0, reset_at.timestamp()));
    }
    let repo: RepoRef = "acme/nowait".parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = SnapshotCache::open(dir.path()).unwrap();

    let err = client_for(&mock, clock, false)
        .fetch_issues(&repo, None, &cache)
        .await
        .unwrap_err();
    match err {
        IngestError::RateLimited { reset_at: at } => assert_eq!(at, reset_at),
        other => panic!("expected RateLimited, got {other:?}"),
    }
}
