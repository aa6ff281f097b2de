//! Writes a small demo snapshot and annotations file so the CLI can be
//! driven end to end without network access:
//!
//! ```bash
//! cargo run -p auditor --example demo_fixture -- demo/
//! auditor run --repos demo/repos.txt --annotations demo/annotations.jsonl \
//!     --cache-dir demo/cache --out demo/runs
//! auditor report --run demo/runs/run-<id> --format markdown
//! ```

use auditor::ingest::{snapshot_store, Corpus, IssueState, RawIssue, SnapshotCache};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cache = SnapshotCache::open(dir.join("cache")).unwrap();
    let repo: auditor::ingest::RepoRef = "acme/widget".parse().unwrap();

    // 30 issues: 6 PRs, 4 open, 12 bugs (2 duplicates), 8 non-bugs.
    let mut corpus = Corpus::new(repo.clone(), "2025-01-01T00:00:00Z".parse().unwrap());
    let mut annotations = String::new();
    for n in 1..=30u64 {
        let is_pr = n <= 6;
        let open = (7..=10).contains(&n);
        let is_bug = (11..=22).contains(&n);
        corpus.issues.insert(
            n,
            RawIssue {
                repo: repo.clone(),
                number: n,
                title: format!("issue {n}"),
                body: format!("report body {n}"),
                labels: if is_bug {
                    vec!["bug".into()]
                } else {
                    vec!["question".into()]
                },
                state: if open { IssueState::Open } else { IssueState::Closed },
                is_pull_request: is_pr,
                created_at: "2019-06-01T00:00:00Z".parse().unwrap(),
                closed_at: (!open).then(|| "2019-07-01T00:00:00Z".parse().unwrap()),
                author_login: "reporter".into(),
                tombstone: false,
            },
        );
        let record = if !is_bug {
            format!("{{\"repo\":\"acme/widget\",\"number\":{n},\"is_bug\":false}}")
        } else if n <= 12 {
            format!(
                "{{\"repo\":\"acme/widget\",\"number\":{n},\"is_bug\":true,\"is_duplicate\":true}}"
            )
        } else {
            let (bug_type, was_fixed) = match n {
                13..=18 => ("external", true),
                19 => ("external", false),
                20 => ("unknown", false),
                _ => ("internal", false),
            };
            format!(
                "{{\"repo\":\"acme/widget\",\"number\":{n},\"is_bug\":true,\"bug_type\":\"{bug_type}\",\"was_fixed\":{was_fixed}}}"
            )
        };
        annotations.push_str(&record);
        annotations.push('\n');
    }
    snapshot_store(&corpus, &cache.path_for(&repo)).unwrap();
    std::fs::write(dir.join("annotations.jsonl"), annotations).unwrap();
    std::fs::write(dir.join("repos.txt"), "acme/widget\n").unwrap();
    println!("demo fixture written under {}", dir.display());
}
