//! Measure how responsive package maintainers are to bug reports.
//!
//! `auditor` mines a repository's GitHub issues, identifies bug reports,
//! classifies each one as responsive / not-responsive / not-applicable —
//! deterministically from annotations or automatically through a
//! chat-completion backend — and aggregates per-project responsiveness
//! statistics. It also ships the evaluation harness used to benchmark the
//! model stages against labeled ground truth.
//!
//! The modules follow the data path:
//!
//! * [`ingest`] — GitHub REST client, rate budgeting, resumable snapshots.
//! * [`corpus`] — filter funnel, label vocabulary, ground-truth curation.
//! * [`framework`] — the deterministic verdict rules and the
//!   non-responsiveness taxonomy.
//! * [`context`] — text blocks the model stages consume, with actor roles.
//! * [`llm`] — backend transport, output contracts, parsing, answer cache.
//! * [`eval`] — precision/recall/F1 scoring, sweeps, model comparison.
//! * [`pipeline`] — the staged audit with conservation accounting.
//! * [`report`] — per-project and ecosystem aggregation and rendering.
//!
//! The `book/` directory holds a guide whose code snippets compile and run
//! as part of this crate's doctests.

pub mod context;
pub mod corpus;
pub mod eval;
pub mod framework;
pub mod ingest;
pub mod llm;
pub mod pipeline;
pub mod report;

pub use framework::{derive_verdict, Annotation, BugType, Verdict, VerdictClass};
pub use ingest::{IssueKey, RawIssue, RepoRef};

// The guide's snippets are doctests: every ```rust block in these chapters
// compiles and runs under `cargo test`.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(framework, "../../../book/src/framework.md");
    chapter!(corpus, "../../../book/src/corpus.md");
    chapter!(context, "../../../book/src/context.md");
    chapter!(backends, "../../../book/src/backends.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(pipeline, "../../../book/src/pipeline.md");
    chapter!(reports, "../../../book/src/reports.md");
}
