//! Property tests for the cross-module invariants.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use auditor::context::{build_responsiveness_context, ContextBudget};
use auditor::corpus::{
    apply_filters, canonicalize_label, curate_nonbug_labels, BugLabelMode, FilterSpec,
    LabelVocabulary, TimeWindow,
};
use auditor::eval::{score, LabeledItem, Prediction, UnparseablePolicy};
use auditor::framework::{derive_verdict, Annotation, Annotator, BugType, VerdictClass};
use auditor::ingest::{
    snapshot_load, snapshot_store, Corpus, IssueKey, IssueState, RawIssue, RawTimelineEvent,
    RepoRef,
};
use auditor::llm::{parse_answer, serialize_answer, ParseStatus, PromptTemplate};

fn arb_bug_type() -> impl Strategy<Value = BugType> {
    prop_oneof![
        Just(BugType::Internal),
        Just(BugType::External),
        Just(BugType::Unknown)
    ]
}

fn arb_annotation() -> impl Strategy<Value = Annotation> {
    (
        any::<bool>(),
        any::<bool>(),
        proptest::option::of(arb_bug_type()),
        proptest::option::of(any::<bool>()),
    )
        .prop_map(|(is_duplicate, is_complex, bug_type, was_fixed)| Annotation {
            is_duplicate,
            is_complex,
            bug_type,
            was_fixed,
            annotator: Annotator::Human,
            evidence: vec![],
        })
}

const LABEL_POOL: [&str; 10] = [
    "bug", "Possibly Bug", "feature", "docs", "question", "help-wanted", "ci", "debug",
    "type: bug", "idea",
];

fn arb_issue(number: u64) -> impl Strategy<Value = RawIssue> {
    (
        proptest::collection::vec(0..LABEL_POOL.len(), 0..4),
        any::<bool>(),
        any::<bool>(),
        0..3u8,
    )
        .prop_map(move |(label_idx, is_pr, closed, era)| {
            let repo: RepoRef = "prop/repo".parse().unwrap();
            let created_at = match era {
                0 => "2016-01-01T00:00:00Z",
                1 => "2019-01-01T00:00:00Z",
                _ => "2022-01-01T00:00:00Z",
            };
            RawIssue {
                repo,
                number,
                title: format!("issue {number}"),
                body: String::new(),
                labels: label_idx.iter().map(|i| LABEL_POOL[*i].to_string()).collect(),
                state: if closed { IssueState::Closed } else { IssueState::Open },
                is_pull_request: is_pr,
                created_at: created_at.parse().unwrap(),
                closed_at: closed.then(|| "2023-01-01T00:00:00Z".parse().unwrap()),
                author_login: "reporter".to_string(),
                tombstone: false,
            }
        })
}

fn arb_issues() -> impl Strategy<Value = Vec<RawIssue>> {
    proptest::collection::vec(any::<bool>(), 0..40).prop_flat_map(|seeds| {
        let strategies: Vec<_> = seeds
            .iter()
            .enumerate()
            .map(|(i, _)| arb_issue(i as u64 + 1))
            .collect();
        strategies
    })
}

proptest! {
    // Totality plus the three rules, over the full annotation space.
    #[test]
    fn verdict_rules_are_total(annotation in arb_annotation()) {
        match derive_verdict(&annotation) {
            Ok(v) => {
                prop_assert!(annotation.validate().is_ok());
                if annotation.is_duplicate {
                    prop_assert_eq!(v.class, VerdictClass::Duplicate);
                } else if annotation.is_complex {
                    prop_assert_eq!(v.class, VerdictClass::Complex);
                } else if annotation.was_fixed == Some(true) {
                    prop_assert_eq!(v.class, VerdictClass::Responsive);
                } else if annotation.bug_type == Some(BugType::Internal) {
                    prop_assert_eq!(v.class, VerdictClass::NotApplicable);
                } else {
                    prop_assert_eq!(v.class, VerdictClass::NotResponsive);
                }
                if v.class.is_three_way() {
                    prop_assert!(v.bug_type.is_some());
                }
            }
            Err(_) => prop_assert!(annotation.validate().is_err()),
        }
    }

    // Filtering twice with the same spec equals filtering once, the funnel
    // never grows, and every stage conserves its input.
    #[test]
    fn filters_are_idempotent_and_monotone(issues in arb_issues(), windowed in any::<bool>()) {
        let vocab = LabelVocabulary::default_vocabulary();
        let spec = FilterSpec {
            exclude_prs: true,
            require_closed: true,
            window: windowed.then(|| TimeWindow::parse("2017-08..2020-08").unwrap()),
            bug_label_mode: BugLabelMode::RegexLabels,
        };
        let (once, trace) = apply_filters(&issues, &spec, &vocab, None);
        let (twice, _) = apply_filters(&once, &spec, &vocab, None);
        prop_assert_eq!(&once, &twice);
        for stage in &trace.stages {
            prop_assert_eq!(stage.input, stage.output + stage.excluded);
        }
        for pair in trace.stages.windows(2) {
            prop_assert!(pair[1].output <= pair[0].output);
            prop_assert_eq!(pair[1].input, pair[0].output);
        }
    }

    // Curation output is independent of issue iteration order, and no
    // candidate is bug-matched.
    #[test]
    fn curation_is_order_independent(issues in arb_issues()) {
        let vocab = LabelVocabulary::default_vocabulary();
        let forward = curate_nonbug_labels(&issues, &vocab);
        let mut reversed_input = issues.clone();
        reversed_input.reverse();
        let reversed = curate_nonbug_labels(&reversed_input, &vocab);
        prop_assert_eq!(&forward, &reversed);
        for label in &forward {
            prop_assert!(!vocab.is_bug_label(label));
        }
    }

    // An issue carrying only allowlisted labels is never bug-matched.
    #[test]
    fn allowlist_soundness(labels in proptest::collection::vec(0..LABEL_POOL.len(), 1..4)) {
        let vocab = LabelVocabulary::default_vocabulary();
        let labels: Vec<String> = labels.iter().map(|i| LABEL_POOL[*i].to_string()).collect();
        let all_allowlisted = labels.iter().all(|l| vocab.is_allowlisted(l));
        let bug_matched = labels.iter().any(|l| vocab.is_bug_label(l));
        prop_assert!(!(all_allowlisted && bug_matched));
        // canonicalization is idempotent while we're here
        for l in &labels {
            let c = canonicalize_label(l);
            prop_assert_eq!(canonicalize_label(&c), c);
        }
    }

    // Whatever the input, no parsed field ever holds a value outside its
    // schema's allowed set, and the parser never panics.
    #[test]
    fn parsed_values_stay_in_schema(raw in ".*") {
        for task in [
            auditor::context::TaskKind::BugIdentification,
            auditor::context::TaskKind::Responsiveness,
        ] {
            let template = PromptTemplate::default_for(task);
            let outcome = parse_answer(&raw, &template);
            if let Some(parsed) = &outcome.parsed {
                for (field, value) in parsed {
                    let allowed = template.output_schema.allowed(field)
                        .expect("parsed fields are schema fields");
                    prop_assert!(allowed.iter().any(|a| a == value));
                }
            } else {
                prop_assert_eq!(outcome.status, ParseStatus::Unparseable);
            }
        }
    }

    // Round trip: serialize a schema-valid answer, parse it back.
    #[test]
    fn answer_round_trip(
        dup in any::<bool>(),
        bug_type in prop_oneof![Just("internal"), Just("external"), Just("unknown")],
        was_fixed in any::<bool>(),
    ) {
        let template = PromptTemplate::default_for(auditor::context::TaskKind::Responsiveness);
        let mut map = BTreeMap::new();
        map.insert("is_duplicate".to_string(), dup.to_string());
        if !dup {
            map.insert("bug_type".to_string(), bug_type.to_string());
            map.insert("was_fixed".to_string(), was_fixed.to_string());
        }
        let text = serialize_answer(&map);
        let outcome = parse_answer(&text, &template);
        prop_assert_eq!(outcome.status, ParseStatus::Ok);
        prop_assert_eq!(outcome.parsed.unwrap(), map);
    }

    // Permuting scored items never changes a metric, and adding a correct
    // item never decreases accuracy or that class's recall.
    #[test]
    fn scoring_is_permutation_invariant_and_monotone(
        pairs in proptest::collection::vec((0..3usize, 0..3usize), 1..50),
        extra_class in 0..3usize,
    ) {
        let classes: Vec<String> = ["alpha", "beta", "gamma"].iter().map(|s| s.to_string()).collect();
        let repo: RepoRef = "o/r".parse().unwrap();
        let make = |pairs: &[(usize, usize)]| {
            let mut gold = Vec::new();
            let mut preds = Vec::new();
            for (i, (g, p)) in pairs.iter().enumerate() {
                let key = IssueKey { repo: repo.clone(), number: i as u64 + 1 };
                gold.push(LabeledItem { key: key.clone(), class: classes[*g].clone() });
                preds.push(Prediction { key, class: Some(classes[*p].clone()) });
            }
            (gold, preds)
        };
        let (gold, preds) = make(&pairs);
        let (_, report) = score(&gold, &preds, &classes, UnparseablePolicy::ScoreAsWrong).unwrap();

        let mut shuffled = pairs.clone();
        shuffled.reverse();
        let (gold_r, preds_r) = make(&shuffled);
        let (_, report_r) = score(&gold_r, &preds_r, &classes, UnparseablePolicy::ScoreAsWrong).unwrap();
        // permutation only relabels keys; metrics must agree
        prop_assert!((report.accuracy - report_r.accuracy).abs() < 1e-12);
        for class in &classes {
            let a = &report.per_class[class.as_str()];
            let b = &report_r.per_class[class.as_str()];
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
        }

        let mut extended = pairs.clone();
        extended.push((extra_class, extra_class));
        let (gold_e, preds_e) = make(&extended);
        let (_, report_e) = score(&gold_e, &preds_e, &classes, UnparseablePolicy::ScoreAsWrong).unwrap();
        prop_assert!(report_e.accuracy + 1e-12 >= report.accuracy);
        let before = report.per_class[&classes[extra_class]].recall;
        let after = report_e.per_class[&classes[extra_class]].recall;
        prop_assert!(after + 1e-12 >= before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Store → load is the identity on corpora.
    #[test]
    fn snapshot_round_trip(issues in arb_issues(), with_events in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.jsonl");
        let repo: RepoRef = "prop/repo".parse().unwrap();
        let mut corpus = Corpus::new(repo.clone(), "2025-01-01T00:00:00Z".parse().unwrap());
        for issue in issues {
            if with_events {
                corpus.timelines.entry(issue.number).or_insert_with(|| {
                    vec![RawTimelineEvent {
                        issue: IssueKey { repo: repo.clone(), number: issue.number },
                        event_id: format!("{}.0", issue.number),
                        event_kind: "commented".to_string(),
                        actor_login: Some("a".to_string()),
                        created_at: "2020-01-01T00:00:00Z".parse().unwrap(),
                        payload: serde_json::json!({"body": "hi"}),
                    }]
                });
            }
            corpus.issues.insert(issue.number, issue);
        }
        corpus.timelines.retain(|n, _| corpus.issues.contains_key(n));
        snapshot_store(&corpus, &path).unwrap();
        let loaded = snapshot_load(&path).unwrap();
        prop_assert_eq!(corpus, loaded);
    }

    // Context building is deterministic and only ever includes a
    // subsequence of the given events.
    #[test]
    fn context_is_deterministic_subsequence(
        kinds in proptest::collection::vec(prop_oneof![
            Just("commented"), Just("closed"), Just("labeled"), Just("reopened")
        ], 0..20),
        budget_tokens in 60..4000u32,
    ) {
        let repo: RepoRef = "prop/repo".parse().unwrap();
        let issue = RawIssue {
            repo: repo.clone(),
            number: 1,
            title: "prop issue".to_string(),
            body: "a body".to_string(),
            labels: vec![],
            state: IssueState::Closed,
            is_pull_request: false,
            created_at: "2020-01-01T00:00:00Z".parse().unwrap(),
            closed_at: Some("2020-02-01T00:00:00Z".parse().unwrap()),
            author_login: "r".to_string(),
            tombstone: false,
        };
        let events: Vec<RawTimelineEvent> = kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| RawTimelineEvent {
                issue: IssueKey { repo: repo.clone(), number: 1 },
                event_id: format!("1.{i}"),
                event_kind: kind.to_string(),
                actor_login: Some("u".to_string()),
                created_at: "2020-01-02T00:00:00Z".parse().unwrap(),
                payload: serde_json::json!({"body": "some comment text here"}),
            })
            .collect();
        let budget = ContextBudget { max_tokens: budget_tokens, per_comment_tokens: 50 };
        let a = build_responsiveness_context(&issue, &events, None, &budget);
        let b = build_responsiveness_context(&issue, &events, None, &budget);
        prop_assert_eq!(&a, &b);

        let all_ids: Vec<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
        let mut cursor = 0usize;
        for id in &a.included_events {
            match all_ids[cursor..].iter().position(|x| x == id) {
                Some(pos) => cursor += pos + 1,
                None => prop_assert!(false, "{} breaks subsequence order", id),
            }
        }
        if !a.truncated {
            prop_assert!(a.token_estimate <= budget.max_tokens);
        }
        prop_assert!(a.text.starts_with("TITLE: prop issue"));
    }
}
