//! Parse and validate model output against a template's contract.
//!
//! Exact JSON is accepted as-is; otherwise the last top-level JSON object in
//! the raw text is extracted by bracket scan and marked `Repaired`. Field
//! names and values match case-insensitively and are canonicalized to
//! lowercase. Missing required fields are never invented: an incomplete or
//! out-of-schema answer is `Unparseable` — that outcome is data, not an
//! error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::template::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub parsed: Option<BTreeMap<String, String>>,
}

impl ParseOutcome {
    fn unparseable() -> Self {
        ParseOutcome {
            status: ParseStatus::Unparseable,
            parsed: None,
        }
    }
}

/// Parse raw model output against the template's schema.
pub fn parse_answer(raw: &str, template: &PromptTemplate) -> ParseOutcome {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return ParseOutcome::unparseable();
    }

    // Exact JSON first.
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        return match validate_value(&value, template) {
            Some(parsed) => ParseOutcome {
                status: ParseStatus::Ok,
                parsed: Some(parsed),
            },
            None => ParseOutcome::unparseable(),
        };
    }

    // Otherwise the last top-level {...} span in the text.
    let Some(candidate) = last_top_level_object(trimmed) else {
        return ParseOutcome::unparseable();
    };
    let Ok(value) = serde_json::from_str::<Value>(candidate) else {
        return ParseOutcome::unparseable();
    };
    match validate_value(&value, template) {
        Some(parsed) => ParseOutcome {
            status: ParseStatus::Repaired,
            parsed: Some(parsed),
        },
        None => ParseOutcome::unparseable(),
    }
}

/// Scan for balanced `{...}` spans outside string literals and return the
/// last one.
fn last_top_level_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans.last().map(|&(s, e)| &text[s..e])
}

/// Check an extracted JSON value against the schema: must be an object,
/// every schema field present must hold an allowed value (case-insensitive),
/// unknown extra fields are ignored, explicit nulls count as absent, and the
/// task's completeness rule must hold.
fn validate_value(value: &Value, template: &PromptTemplate) -> Option<BTreeMap<String, String>> {
    let object = value.as_object()?;
    let schema = &template.output_schema;
    let mut parsed = BTreeMap::new();
    for (raw_key, raw_value) in object {
        let Some(field) = schema.canonical_field(raw_key) else {
            continue; // chatter fields some models add
        };
        if raw_value.is_null() {
            continue;
        }
        let rendered = match raw_value {
            Value::String(s) => s.trim().to_lowercase(),
            Value::Bool(b) => b.to_string(),
            other => other.to_string().to_lowercase(),
        };
        let allowed = schema.allowed(field)?;
        if !allowed.iter().any(|a| a.eq_ignore_ascii_case(&rendered)) {
            return None; // value outside the schema
        }
        parsed.insert(field.to_string(), rendered);
    }
    if !template.is_complete(&parsed) {
        return None;
    }
    Some(parsed)
}

/// Canonical JSON text for a parsed value map (round-trip partner of
/// [`parse_answer`]).
pub fn serialize_answer(parsed: &BTreeMap<String, String>) -> String {
    let object: serde_json::Map<String, Value> = parsed
        .iter()
        .map(|(k, v)| {
            let value = match v.as_str() {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                other => Value::String(other.to_string()),
            };
            (k.clone(), value)
        })
        .collect();
    Value::Object(object).to_string()
}
