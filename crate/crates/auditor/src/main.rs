//! `auditor` — measure maintainer responsiveness to bug reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};

use auditor::context::{
    build_bugid_context, build_responsiveness_context, default_event_kinds, select_events,
    ContextBudget, TaskKind,
};
use auditor::corpus::{
    apply_filters, load_ground_truth, BugLabelMode, FilterSpec, LabelVocabulary, TimeWindow,
};
use auditor::eval::{
    compare_models, render_comparison, render_sweep, score, sweep_report, LabeledItem, Prediction,
    UnparseablePolicy,
};
use auditor::framework::{truth_table, VerdictClass};
use auditor::ingest::{GithubClient, IssueKey, RepoRef, SnapshotCache};
use auditor::llm::{default_sweep_grid, load_templates, sweep, AnswerCache, ChatBackend};
use auditor::pipeline::{
    run_audit, run_dir_entries, write_outputs, AuditConfig, FileAnnotator, IssueAnnotator,
    LlmAnnotator,
};
use auditor::report::{render, summarize_ecosystem, summarize_projects, RenderFormat};

#[derive(Parser)]
#[command(name = "auditor", version, about = "Audit maintainer responsiveness to bug reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CacheArgs {
    /// Directory holding per-repo snapshot files.
    #[arg(long, default_value = "auditor-cache")]
    cache_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch issues (and optionally timelines/contributors) into the cache.
    Fetch {
        #[arg(long)]
        repo: RepoRef,
        /// Only issues updated at/after this RFC 3339 timestamp.
        #[arg(long)]
        since: Option<chrono::DateTime<chrono::Utc>>,
        /// Fail instead of sleeping when the rate-limit budget is exhausted.
        #[arg(long)]
        no_wait: bool,
        /// Also fetch every cached issue's timeline.
        #[arg(long)]
        timelines: bool,
        /// Also fetch the contributor list.
        #[arg(long)]
        contributors: bool,
        /// API base URL (GitHub Enterprise or a test server).
        #[arg(long, default_value = auditor::ingest::DEFAULT_BASE_URL)]
        api_url: String,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Apply the filter funnel to a cached snapshot and print the trace.
    Filter {
        #[arg(long)]
        repo: RepoRef,
        /// Half-open window over creation time, e.g. 2017-08..2020-08.
        #[arg(long)]
        window: Option<String>,
        /// regex | llm | either
        #[arg(long, default_value = "regex")]
        bug_mode: String,
        /// Label vocabulary TOML (bug_patterns + nonbug_allowlist).
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Stage-one classifications for llm/either modes (annotations file).
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        keep_prs: bool,
        #[arg(long)]
        include_open: bool,
        #[arg(long, default_value = "text")]
        format: String,
        /// Write surviving issue keys to this file, one JSON object per line.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Inspect the verdict decision rules.
    Framework {
        /// Print the decision table.
        #[arg(long)]
        print_table: bool,
    },
    /// Dump the context block built for one issue.
    Context {
        /// owner/name#number
        #[arg(long)]
        issue: IssueKey,
        /// bugid | responsiveness
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Run the full audit over a set of repositories.
    Run {
        /// File with one owner/name per line (# comments allowed).
        #[arg(long)]
        repos: Option<PathBuf>,
        /// Repository, repeatable; combined with --repos.
        #[arg(long = "repo")]
        repo_args: Vec<RepoRef>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        window: Option<String>,
        /// Include open issues (results are not comparable with closed-only
        /// runs).
        #[arg(long)]
        include_open: bool,
        /// Annotation file for a model-free run.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Directory of template overrides.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        no_wait: bool,
        /// API base URL (GitHub Enterprise or a test server).
        #[arg(long, default_value = auditor::ingest::DEFAULT_BASE_URL)]
        api_url: String,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Score predictions against labeled ground truth.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Prediction file (lines with `predicted` or `verdict`), or a run
        /// directory — run-derived predictions are restricted to the gold
        /// keys.
        #[arg(long)]
        pred: PathBuf,
        /// bugid | responsiveness
        #[arg(long)]
        task: String,
        /// Exclude unparseable predictions instead of scoring them as wrong.
        #[arg(long)]
        drop_unparseable: bool,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Sweep the sampling grid against labeled ground truth.
    Sweep {
        #[arg(long)]
        gold: PathBuf,
        /// bugid | responsiveness
        #[arg(long)]
        task: String,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Answer cache file (defaults to <cache-dir>/answers.jsonl).
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        in_flight: usize,
        #[arg(long)]
        drop_unparseable: bool,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// List non-bug label candidates (never bug-matched, never co-occurring
    /// with a bug label) and optionally sample issues per candidate for
    /// review.
    Curate {
        #[arg(long)]
        repo: RepoRef,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Sample up to this many issues per candidate label.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Aggregate a run's verdicts into project and ecosystem statistics.
    Report {
        /// Run directory (runs/run-<id>).
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
        /// Minimum three-way verdicts for a project to enter the quantiles.
        #[arg(long, default_value_t = 1)]
        min_verdicts: u64,
    },
    /// Compare metric reports from several models side by side.
    Compare {
        /// model=report.json pairs.
        #[arg(required = true)]
        reports: Vec<String>,
    },
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

#[tokio::main]
async fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Fetch {
            repo,
            since,
            no_wait,
            timelines,
            contributors,
            api_url,
            cache,
        } => {
            let cache = SnapshotCache::open(&cache.cache_dir)?;
            let client = GithubClient::builder()
                .base_url(api_url)
                .wait_on_rate_limit(!no_wait)
                .build()?;
            let issues = client.fetch_issues(&repo, since, &cache).await?;
            println!("{repo}: {} issues cached", issues.len());
            if timelines {
                let mut events = 0usize;
                for issue in &issues {
                    events += client.fetch_timeline(&repo, issue.number, &cache).await?.len();
                }
                println!("{repo}: {events} timeline events cached");
            }
            if contributors {
                let set = client.fetch_contributors(&repo, &cache).await?;
                println!("{repo}: {} contributors cached", set.logins.len());
            }
            Ok(0)
        }

        Command::Filter {
            repo,
            window,
            bug_mode,
            vocab,
            annotations,
            keep_prs,
            include_open,
            format,
            out,
            cache,
        } => {
            let cache = SnapshotCache::open(&cache.cache_dir)?;
            let corpus = cache.load(&repo)?;
            let vocab = match vocab {
                Some(path) => LabelVocabulary::load(&path)?,
                None => LabelVocabulary::default_vocabulary(),
            };
            let spec = FilterSpec {
                exclude_prs: !keep_prs,
                require_closed: !include_open,
                window: window.as_deref().map(TimeWindow::parse).transpose()?,
                bug_label_mode: match bug_mode.as_str() {
                    "regex" => BugLabelMode::RegexLabels,
                    "llm" => BugLabelMode::LlmClassified,
                    "either" => BugLabelMode::Either,
                    other => bail!("unknown --bug-mode {other:?}"),
                },
            };
            let classifications = annotations
                .map(|path| -> anyhow::Result<BTreeMap<IssueKey, bool>> {
                    let text = std::fs::read_to_string(&path)?;
                    let mut map = BTreeMap::new();
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        let record: auditor::pipeline::AnnotationFileRecord =
                            serde_json::from_str(line)?;
                        map.insert(
                            IssueKey {
                                repo: record.repo.clone(),
                                number: record.number,
                            },
                            record.is_bug,
                        );
                    }
                    Ok(map)
                })
                .transpose()?;
            let issues: Vec<_> = corpus.live_issues().cloned().collect();
            let (kept, trace) = apply_filters(&issues, &spec, &vocab, classifications.as_ref());
            match format.as_str() {
                "json" => println!("{}", serde_json::to_string_pretty(&trace)?),
                _ => print!("{trace}"),
            }
            if let Some(out) = out {
                let mut lines = String::new();
                for issue in &kept {
                    lines.push_str(&serde_json::to_string(&issue.key())?);
                    lines.push('\n');
                }
                std::fs::write(&out, lines)?;
                println!("{} surviving issues written to {}", kept.len(), out.display());
            }
            Ok(0)
        }

        Command::Framework { print_table } => {
            if print_table {
                print!("{}", truth_table());
            } else {
                println!("use --print-table to dump the decision rules");
            }
            Ok(0)
        }

        Command::Context {
            issue,
            task,
            out,
            cache,
        } => {
            let cache = SnapshotCache::open(&cache.cache_dir)?;
            let corpus = cache.load(&issue.repo)?;
            let raw = corpus
                .issues
                .get(&issue.number)
                .with_context(|| format!("{issue} not in snapshot"))?;
            let budget = ContextBudget::default();
            let block = match task.as_str() {
                "bugid" | "bug_identification" => build_bugid_context(raw, &budget),
                "responsiveness" => {
                    let selected = select_events(corpus.timeline(issue.number), &default_event_kinds());
                    build_responsiveness_context(
                        raw,
                        &selected,
                        corpus.contributors.as_ref(),
                        &budget,
                    )
                }
                other => bail!("unknown --task {other:?}"),
            };
            match out {
                Some(path) => std::fs::write(&path, &block.text)?,
                None => println!("{}", block.text),
            }
            eprintln!(
                "task={:?} tokens~{} truncated={} events={}",
                block.task,
                block.token_estimate,
                block.truncated,
                block.included_events.len()
            );
            Ok(0)
        }

        Command::Run {
            repos,
            repo_args,
            out,
            window,
            include_open,
            annotations,
            templates,
            no_wait,
            api_url,
            cache,
        } => {
            let mut repo_list = repo_args;
            if let Some(path) = repos {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    repo_list.push(line.parse()?);
                }
            }
            repo_list.sort();
            repo_list.dedup();

            let snapshot_cache = SnapshotCache::open(&cache.cache_dir)?;
            let config = AuditConfig {
                window: window.as_deref().map(TimeWindow::parse).transpose()?,
                include_open,
                ..AuditConfig::default()
            };

            let annotator: Box<dyn IssueAnnotator> = match annotations {
                Some(path) => Box::new(FileAnnotator::load(&path)?),
                None => {
                    let backend = ChatBackend::from_env().context(
                        "set AUDITOR_LLM_ENDPOINT (and optionally AUDITOR_LLM_MODEL) or pass --annotations",
                    )?;
                    let (bugid, resp) = load_templates(templates.as_deref())?;
                    let answers = AnswerCache::open(cache.cache_dir.join("answers.jsonl"))?;
                    Box::new(LlmAnnotator::new(backend, bugid, resp, config.clone(), answers))
                }
            };

            let needs_fetch = repo_list.iter().any(|r| !snapshot_cache.has_snapshot(r));
            let client = if needs_fetch {
                Some(
                    GithubClient::builder()
                        .base_url(api_url)
                        .wait_on_rate_limit(!no_wait)
                        .build()?,
                )
            } else {
                None
            };

            let outcome = run_audit(
                &repo_list,
                &config,
                &snapshot_cache,
                client.as_ref(),
                annotator.as_ref(),
            )
            .await?;
            let run_dir = write_outputs(&out, &outcome)?;

            println!("run {} -> {}", outcome.run.run_id, run_dir.display());
            println!("stage                 input   output  excluded");
            for stage in &outcome.run.stages {
                println!(
                    "{:<20} {:>7} {:>8} {:>9}",
                    stage.name, stage.input_count, stage.output_count, stage.excluded_count
                );
            }
            println!("verdicts: {}", outcome.verdicts.len());
            if outcome.failure_count > 0 {
                eprintln!("{} per-issue failures; partial results written", outcome.failure_count);
                return Ok(2);
            }
            Ok(0)
        }

        Command::Eval {
            gold,
            pred,
            task,
            drop_unparseable,
            format,
        } => {
            let (classes, gold_items) = load_gold_for_task(&gold, &task)?;
            let preds = if pred.is_dir() {
                let gold_keys: std::collections::BTreeSet<IssueKey> =
                    gold_items.iter().map(|g| g.key.clone()).collect();
                predictions_from_run_dir(&pred, &task, &gold_keys)?
            } else {
                load_predictions(&pred)?
            };
            let policy = if drop_unparseable {
                UnparseablePolicy::Drop
            } else {
                UnparseablePolicy::ScoreAsWrong
            };
            let (matrix, report) = score(&gold_items, &preds, &classes, policy)?;
            match format.as_str() {
                "json" => println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "matrix": matrix,
                        "report": report,
                    }))?
                ),
                _ => {
                    println!("{:<18} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support");
                    for (class, m) in &report.per_class {
                        println!(
                            "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>9}{}",
                            class,
                            m.precision,
                            m.recall,
                            m.f1,
                            report.support[class],
                            if m.degenerate { "  (degenerate)" } else { "" }
                        );
                    }
                    println!("accuracy: {:.4}", report.accuracy);
                    println!("unparseable: {}", report.unparseable_count);
                }
            }
            Ok(0)
        }

        Command::Sweep {
            gold,
            task,
            templates,
            answers,
            in_flight,
            drop_unparseable,
            cache,
        } => {
            let (classes, gold_items) = load_gold_for_task(&gold, &task)?;
            let backend = ChatBackend::from_env()
                .context("set AUDITOR_LLM_ENDPOINT to run a sweep")?;
            let (bugid_template, resp_template) = load_templates(templates.as_deref())?;
            let snapshot_cache = SnapshotCache::open(&cache.cache_dir)?;
            let answer_cache = AnswerCache::open(
                answers.unwrap_or_else(|| cache.cache_dir.join("answers.jsonl")),
            )?;
            let budget = ContextBudget::default();

            let (template, critical) = match task.as_str() {
                "bugid" | "bug_identification" => (&bugid_template, "bug"),
                "responsiveness" => (&resp_template, "not_responsive"),
                other => bail!("unknown --task {other:?}"),
            };

            // Build one context per gold issue from the snapshots.
            let mut corpora: BTreeMap<RepoRef, auditor::ingest::Corpus> = BTreeMap::new();
            let mut contexts = Vec::new();
            for item in &gold_items {
                let key: IssueKey = item.key.clone();
                let corpus = match corpora.get(&key.repo) {
                    Some(c) => c,
                    None => {
                        let c = snapshot_cache.load(&key.repo)?;
                        corpora.entry(key.repo.clone()).or_insert(c)
                    }
                };
                let Some(raw) = corpus.issues.get(&key.number) else {
                    bail!("{key} not in snapshot; fetch it first");
                };
                let block = match template.task {
                    TaskKind::BugIdentification => build_bugid_context(raw, &budget),
                    TaskKind::Responsiveness => {
                        let selected =
                            select_events(corpus.timeline(key.number), &default_event_kinds());
                        build_responsiveness_context(
                            raw,
                            &selected,
                            corpus.contributors.as_ref(),
                            &budget,
                        )
                    }
                };
                contexts.push((key, block));
            }

            let grid = default_sweep_grid();
            let answers_by_config =
                sweep(&backend, template, &contexts, &grid, &answer_cache, in_flight).await?;

            let mut cells = Vec::new();
            for (digest, cell) in answers_by_config {
                let preds = cell
                    .answers
                    .iter()
                    .map(|(key, answer)| Prediction {
                        key: key.clone(),
                        class: answer_to_class(template.task, answer),
                    })
                    .collect();
                cells.push((digest, cell.config, preds));
            }
            let policy = if drop_unparseable {
                UnparseablePolicy::Drop
            } else {
                UnparseablePolicy::ScoreAsWrong
            };
            let ranked = sweep_report(cells, &gold_items, &classes, critical, policy)?;
            print!("{}", render_sweep(&ranked, critical));
            Ok(0)
        }

        Command::Curate {
            repo,
            vocab,
            sample,
            seed,
            cache,
        } => {
            let cache = SnapshotCache::open(&cache.cache_dir)?;
            let corpus = cache.load(&repo)?;
            let vocab = match vocab {
                Some(path) => LabelVocabulary::load(&path)?,
                None => LabelVocabulary::default_vocabulary(),
            };
            let issues: Vec<_> = corpus.live_issues().cloned().collect();
            let candidates = auditor::corpus::curate_nonbug_labels(&issues, &vocab);
            println!("{} non-bug label candidates:", candidates.len());
            for candidate in &candidates {
                println!("  {candidate}");
            }
            if let Some(k) = sample {
                let samples = auditor::corpus::sample_for_review(&issues, &candidates, k, seed);
                println!("\nreview sample (seed {seed}):");
                for (label, keys) in samples {
                    let keys: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
                    println!("  {label}: {}", keys.join(", "));
                }
            }
            Ok(0)
        }

        Command::Report {
            run,
            format,
            min_verdicts,
        } => {
            let entries = run_dir_entries(&run)?;
            let format: RenderFormat = format
                .parse()
                .map_err(|e: String| anyhow::anyhow!(e))?;
            let projects = summarize_projects(&entries);
            let summary = match summarize_ecosystem(&projects, min_verdicts) {
                Ok(summary) => summary,
                Err(auditor::report::ReportError::NoEligibleProjects) => {
                    auditor::report::EcosystemSummary::empty()
                }
                Err(e) => return Err(e.into()),
            };
            print!("{}", render(&summary, format));
            Ok(0)
        }

        Command::Compare { reports } => {
            let mut map = BTreeMap::new();
            for spec in reports {
                let (model, path) = spec
                    .split_once('=')
                    .context("expected model=report.json")?;
                let text = std::fs::read_to_string(path)?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                let report = value.get("report").cloned().unwrap_or(value);
                map.insert(model.to_string(), serde_json::from_value(report)?);
            }
            let table = compare_models(&map)?;
            print!("{}", render_comparison(&table));
            Ok(0)
        }
    }
}

/// Task class set plus gold items from a ground-truth file.
fn load_gold_for_task(path: &Path, task: &str) -> anyhow::Result<(Vec<String>, Vec<LabeledItem>)> {
    let records = load_ground_truth(path)?;
    match task {
        "bugid" | "bug_identification" => {
            let classes = vec!["bug".to_string(), "not_bug".to_string()];
            let items = records
                .iter()
                .map(|r| LabeledItem {
                    key: r.key(),
                    class: if r.gold_is_bug { "bug" } else { "not_bug" }.to_string(),
                })
                .collect();
            Ok((classes, items))
        }
        "responsiveness" => {
            let classes: Vec<String> = [
                VerdictClass::Duplicate,
                VerdictClass::Responsive,
                VerdictClass::NotResponsive,
                VerdictClass::NotApplicable,
            ]
            .iter()
            .map(|c| c.ident().to_string())
            .collect();
            let mut items = Vec::new();
            for r in &records {
                let verdict = r.gold_verdict.with_context(|| {
                    format!("{}#{}: responsiveness gold requires gold_verdict", r.repo, r.number)
                })?;
                items.push(LabeledItem {
                    key: r.key(),
                    class: verdict.ident().to_string(),
                });
            }
            Ok((classes, items))
        }
        other => bail!("unknown --task {other:?}"),
    }
}

/// Reconstruct per-task predictions from a run directory, restricted to the
/// gold keys (a run usually covers more issues than a labeled subset).
///
/// Stage-one: surviving the bug_identification stage means "bug"; a
/// `non_bug` exclusion means "not_bug"; unparseable or failed answers are
/// `None`. Stage-two: verdicts plus duplicate exclusions are the predicted
/// classes; unparseable or failed stage-two answers are `None`.
fn predictions_from_run_dir(
    dir: &Path,
    task: &str,
    gold_keys: &std::collections::BTreeSet<IssueKey>,
) -> anyhow::Result<Vec<Prediction>> {
    let verdicts = auditor::pipeline::read_verdicts(&dir.join("verdicts.jsonl"))?;
    let exclusions = auditor::pipeline::read_exclusions(&dir.join("exclusions.jsonl"))?;
    let mut preds = Vec::new();
    let mut push = |key: IssueKey, class: Option<String>| {
        if gold_keys.contains(&key) {
            preds.push(Prediction { key, class });
        }
    };
    match task {
        "bugid" | "bug_identification" => {
            for v in &verdicts {
                push(
                    IssueKey { repo: v.repo.clone(), number: v.number },
                    Some("bug".to_string()),
                );
            }
            for e in &exclusions {
                let key = IssueKey { repo: e.repo.clone(), number: e.number };
                match (e.stage.as_str(), e.reason.as_str()) {
                    (auditor::pipeline::STAGE_BUG_IDENTIFICATION, "non_bug") => {
                        push(key, Some("not_bug".to_string()))
                    }
                    (auditor::pipeline::STAGE_BUG_IDENTIFICATION, _) => push(key, None),
                    // anything excluded past stage one was classified a bug
                    (auditor::pipeline::STAGE_RESPONSIVENESS, _)
                    | (auditor::pipeline::STAGE_DERIVE_VERDICT, _) => {
                        push(key, Some("bug".to_string()))
                    }
                    _ => {}
                }
            }
        }
        "responsiveness" => {
            for v in &verdicts {
                push(
                    IssueKey { repo: v.repo.clone(), number: v.number },
                    Some(v.verdict.ident().to_string()),
                );
            }
            for e in &exclusions {
                let key = IssueKey { repo: e.repo.clone(), number: e.number };
                match (e.stage.as_str(), e.reason.as_str()) {
                    (auditor::pipeline::STAGE_DERIVE_VERDICT, "duplicate") => {
                        push(key, Some(VerdictClass::Duplicate.ident().to_string()))
                    }
                    (auditor::pipeline::STAGE_RESPONSIVENESS, _) => push(key, None),
                    _ => {}
                }
            }
        }
        other => bail!("unknown --task {other:?}"),
    }
    Ok(preds)
}

/// Accept either plain prediction lines (`predicted` field, null for
/// unparseable) or pipeline verdict records (`verdict` field).
fn load_predictions(path: &Path) -> anyhow::Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), idx + 1))?;
        let repo: RepoRef = value
            .get("repo")
            .and_then(|v| v.as_str())
            .context("prediction line missing repo")?
            .parse()?;
        let number = value
            .get("number")
            .and_then(|v| v.as_u64())
            .context("prediction line missing number")?;
        let class = value
            .get("predicted")
            .or_else(|| value.get("verdict"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        out.push(Prediction {
            key: IssueKey { repo, number },
            class,
        });
    }
    Ok(out)
}

/// Map a parsed stage answer to its predicted class for scoring.
fn answer_to_class(task: TaskKind, answer: &auditor::llm::ModelAnswer) -> Option<String> {
    let parsed = answer.parsed.as_ref()?;
    match task {
        TaskKind::BugIdentification => parsed.get("classification").cloned(),
        TaskKind::Responsiveness => {
            if parsed.get("is_duplicate").map(String::as_str) == Some("true") {
                return Some(VerdictClass::Duplicate.ident().to_string());
            }
            let annotation = auditor::framework::Annotation {
                is_duplicate: false,
                is_complex: false,
                bug_type: parsed.get("bug_type").and_then(|v| v.parse().ok()),
                was_fixed: parsed.get("was_fixed").map(|v| v == "true"),
                annotator: auditor::framework::Annotator::Llm,
                evidence: vec![],
            };
            auditor::framework::derive_verdict(&annotation)
                .ok()
                .map(|v| v.class.ident().to_string())
        }
    }
}
