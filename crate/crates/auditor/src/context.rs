//! Build the text blocks the model stages consume.
//!
//! Bug identification sees the issue title and description; responsiveness
//! classification additionally sees a filtered timeline narrative where each
//! event line is tagged with the actor's role (upstream contributor,
//! downstream reporter, bot). Rendering is deterministic: same inputs, same
//! bytes.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::{is_bot_login, ContributorSet, RawIssue, RawTimelineEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    BugIdentification,
    Responsiveness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorRole {
    Upstream,
    Downstream,
    Bot,
    UnknownActor,
}

impl ActorRole {
    pub fn tag(self) -> &'static str {
        match self {
            ActorRole::Upstream => "UPSTREAM",
            ActorRole::Downstream => "DOWNSTREAM",
            ActorRole::Bot => "BOT",
            ActorRole::UnknownActor => "UNKNOWN",
        }
    }
}

/// Upstream iff the login is in the contributor set and not a bot;
/// contributor status dominates, so an issue author who is also a
/// contributor counts as upstream.
pub fn actor_role(actor_login: Option<&str>, contributors: Option<&ContributorSet>) -> ActorRole {
    match actor_login {
        None => ActorRole::UnknownActor,
        Some(login) if is_bot_login(login) => ActorRole::Bot,
        Some(login) => match contributors {
            Some(set) if set.contains(login) => ActorRole::Upstream,
            // No contributor list means nobody can be proven upstream.
            _ => ActorRole::Downstream,
        },
    }
}

/// Character-based token estimate: `ceil(chars / 4)`.
pub fn token_estimate(text: &str) -> u32 {
    (text.chars().count() as u32).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBudget {
    /// Whole-context ceiling in estimated tokens.
    pub max_tokens: u32,
    /// Per-comment clip in estimated tokens.
    pub per_comment_tokens: u32,
}

impl Default for ContextBudget {
    fn default() -> Self {
        ContextBudget {
            max_tokens: 6000,
            per_comment_tokens: 600,
        }
    }
}

/// A rendered context ready to be sent to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub task: TaskKind,
    pub text: String,
    pub token_estimate: u32,
    pub truncated: bool,
    /// Identifiers of the timeline events present in the text (empty for
    /// bug identification).
    pub included_events: Vec<String>,
}

/// The 13 event kinds that carry acknowledgment, resolution, or duplicate
/// signals. Configurable; this is the shipped default.
pub fn default_event_kinds() -> BTreeSet<String> {
    [
        "commented",
        "closed",
        "reopened",
        "labeled",
        "unlabeled",
        "assigned",
        "referenced",
        "cross-referenced",
        "committed",
        "merged",
        "marked_as_duplicate",
        "unmarked_as_duplicate",
        "renamed",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Keep only events whose kind is in `kinds`, preserving order.
pub fn select_events(
    events: &[RawTimelineEvent],
    kinds: &BTreeSet<String>,
) -> Vec<RawTimelineEvent> {
    events
        .iter()
        .filter(|e| kinds.contains(&e.event_kind))
        .cloned()
        .collect()
}

fn image_placeholder_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"!\[[^\]]*\]\([^)]*\)|<img\b[^>]*>").expect("static regex"))
}

/// Markdown/HTML images carry no signal a text model can use.
fn strip_images(text: &str) -> String {
    image_placeholder_re().replace_all(text, "[image]").into_owned()
}

fn clip_chars(text: &str, max_chars: usize) -> (String, bool) {
    if text.chars().count() <= max_chars {
        return (text.to_string(), false);
    }
    (text.chars().take(max_chars).collect(), true)
}

/// `TITLE: ...\nDESCRIPTION: ...` for stage one. Over-budget descriptions
/// lose their tail; the title is never cut.
pub fn build_bugid_context(issue: &RawIssue, budget: &ContextBudget) -> ContextBlock {
    let body = strip_images(issue.body.trim());
    let description = if body.is_empty() { "(empty)".to_string() } else { body };
    let render = |desc: &str| format!("TITLE: {}\nDESCRIPTION: {}", issue.title, desc);

    let mut text = render(&description);
    let mut truncated = false;
    if token_estimate(&text) > budget.max_tokens {
        let overhead = render("").chars().count();
        let allowed = (budget.max_tokens as usize * 4).saturating_sub(overhead);
        let (clipped, _) = clip_chars(&description, allowed);
        text = render(&clipped);
        truncated = true;
    }
    ContextBlock {
        task: TaskKind::BugIdentification,
        token_estimate: token_estimate(&text),
        truncated,
        included_events: Vec::new(),
        text,
    }
}

fn event_summary(event: &RawTimelineEvent, budget: &ContextBudget) -> String {
    let p = &event.payload;
    let summary = match event.event_kind.as_str() {
        "commented" => {
            let body = p.get("body").and_then(|v| v.as_str()).unwrap_or("");
            let body = strip_images(body.trim());
            let (clipped, cut) = clip_chars(&body, budget.per_comment_tokens as usize * 4);
            let mut s = clipped.replace('\n', " ");
            if cut {
                s.push_str(" [...]");
            }
            s
        }
        "labeled" | "unlabeled" => p
            .pointer("/label/name")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string(),
        "closed" => p
            .get("state_reason")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string(),
        "renamed" => match (p.pointer("/rename/from"), p.pointer("/rename/to")) {
            (Some(from), Some(to)) => format!(
                "\"{}\" -> \"{}\"",
                from.as_str().unwrap_or(""),
                to.as_str().unwrap_or("")
            ),
            _ => String::new(),
        },
        "assigned" => p
            .pointer("/assignee/login")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string(),
        "referenced" | "committed" | "merged" => p
            .get("commit_id")
            .or_else(|| p.get("sha"))
            .and_then(|v| v.as_str())
            .map(|sha| sha.chars().take(7).collect())
            .unwrap_or_default(),
        "cross-referenced" => p
            .pointer("/source/issue/number")
            .and_then(|v| v.as_u64())
            .map(|n| format!("from #{n}"))
            .unwrap_or_default(),
        _ => String::new(),
    };
    summary
}

fn render_event_line(
    event: &RawTimelineEvent,
    contributors: Option<&ContributorSet>,
    budget: &ContextBudget,
) -> String {
    let role = actor_role(event.actor_login.as_deref(), contributors);
    let ts = event.created_at.format("%Y-%m-%dT%H:%M:%SZ");
    let summary = event_summary(event, budget);
    if summary.is_empty() {
        format!("[{ts}] {} {}", role.tag(), event.event_kind)
    } else {
        format!("[{ts}] {} {}: {summary}", role.tag(), event.event_kind)
    }
}

/// Title, description, then one role-tagged line per selected event.
///
/// Under budget pressure events are dropped oldest-first, but the final
/// close event is always retained — closure is the strongest resolution
/// signal — and the title is never cut.
pub fn build_responsiveness_context(
    issue: &RawIssue,
    events: &[RawTimelineEvent],
    contributors: Option<&ContributorSet>,
    budget: &ContextBudget,
) -> ContextBlock {
    let body = strip_images(issue.body.trim());
    let mut description = if body.is_empty() { "(empty)".to_string() } else { body };

    let last_close = events.iter().rposition(|e| e.event_kind == "closed");

    // Render each event line once; the budget arithmetic runs on exact char
    // counts so the final estimate always matches the rendered text.
    let lines: Vec<String> = events
        .iter()
        .map(|e| render_event_line(e, contributors, budget))
        .collect();
    let line_costs: Vec<usize> = lines.iter().map(|l| 1 + l.chars().count()).collect();
    let header = |desc: &str| format!("TITLE: {}\nDESCRIPTION: {}\nEVENTS:", issue.title, desc);
    let fits = |chars: usize| chars.div_ceil(4) <= budget.max_tokens as usize;

    let mut total = header(&description).chars().count() + line_costs.iter().sum::<usize>();
    let mut dropped = vec![false; events.len()];
    let mut truncated = false;

    // Drop oldest droppable events; the final close is pinned.
    let mut cursor = 0;
    while !fits(total) && cursor < events.len() {
        if Some(cursor) != last_close {
            dropped[cursor] = true;
            total -= line_costs[cursor];
            truncated = true;
        }
        cursor += 1;
    }
    if !fits(total) {
        // Events alone no longer help; cut the description tail.
        let desc_chars = description.chars().count();
        let overhead = total - desc_chars;
        let allowed = (budget.max_tokens as usize * 4).saturating_sub(overhead);
        let (clipped, cut) = clip_chars(&description, allowed);
        if cut {
            truncated = true;
            description = clipped;
        }
    }

    let mut text = header(&description);
    let mut included_events = Vec::with_capacity(events.len());
    for (i, line) in lines.iter().enumerate() {
        if !dropped[i] {
            text.push('\n');
            text.push_str(line);
            included_events.push(events[i].event_id.clone());
        }
    }
    ContextBlock {
        task: TaskKind::Responsiveness,
        token_estimate: token_estimate(&text),
        truncated,
        included_events,
        text,
    }
}
