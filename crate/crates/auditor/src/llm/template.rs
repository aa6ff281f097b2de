//! Instruction templates and their output contracts.
//!
//! Templates live in external JSON files so teams can swap in their own
//! instruction text; the defaults are compiled in. Whatever the instruction
//! says, the output contract is enforced here: bug identification answers
//! are a JSON object with a single `classification` field, responsiveness
//! answers carry `is_duplicate` / `bug_type` / `was_fixed`, and the final
//! verdict is always derived by the framework, never emitted by the model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::context::TaskKind;

pub const DEFAULT_BUGID_TEMPLATE: &str = include_str!("../../templates/bug_identification.v1.json");
pub const DEFAULT_RESPONSIVENESS_TEMPLATE: &str =
    include_str!("../../templates/responsiveness.v1.json");

/// Field-name → allowed-values map for a task's JSON answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub fields: BTreeMap<String, Vec<String>>,
}

impl OutputSchema {
    pub fn allowed(&self, field: &str) -> Option<&[String]> {
        self.fields.get(field).map(Vec::as_slice)
    }

    /// Case-insensitive field lookup, returning the canonical field name.
    pub fn canonical_field(&self, name: &str) -> Option<&str> {
        self.fields
            .keys()
            .find(|k| k.eq_ignore_ascii_case(name))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub version: String,
    #[serde(rename = "instruction")]
    pub instruction_text: String,
    pub output_schema: OutputSchema,
}

impl PromptTemplate {
    pub fn from_json_str(text: &str) -> Result<Self, LlmError> {
        let template: PromptTemplate =
            serde_json::from_str(text).map_err(|e| LlmError::Template(e.to_string()))?;
        template.validate()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Template(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn default_for(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::BugIdentification => DEFAULT_BUGID_TEMPLATE,
            TaskKind::Responsiveness => DEFAULT_RESPONSIVENESS_TEMPLATE,
        };
        Self::from_json_str(text).expect("shipped templates are valid")
    }

    /// Enforce the per-task schema shape.
    pub fn validate(&self) -> Result<(), LlmError> {
        let fields = &self.output_schema.fields;
        match self.task {
            TaskKind::BugIdentification => {
                if fields.len() != 1 {
                    return Err(LlmError::Template(
                        "bug identification schema must have exactly one field".into(),
                    ));
                }
                let (_, values) = fields.iter().next().expect("one field");
                let expected = ["bug", "not_bug"];
                if values.len() != 2 || !expected.iter().all(|v| values.iter().any(|x| x == v)) {
                    return Err(LlmError::Template(
                        "bug identification field must allow exactly {bug, not_bug}".into(),
                    ));
                }
            }
            TaskKind::Responsiveness => {
                let want: [(&str, &[&str]); 3] = [
                    ("is_duplicate", &["true", "false"]),
                    ("bug_type", &["internal", "external", "unknown"]),
                    ("was_fixed", &["true", "false"]),
                ];
                if fields.len() != want.len() {
                    return Err(LlmError::Template(
                        "responsiveness schema must have exactly is_duplicate, bug_type, was_fixed"
                            .into(),
                    ));
                }
                for (name, allowed) in want {
                    let values = fields.get(name).ok_or_else(|| {
                        LlmError::Template(format!("responsiveness schema missing field {name}"))
                    })?;
                    if values.len() != allowed.len()
                        || !allowed.iter().all(|v| values.iter().any(|x| x == v))
                    {
                        return Err(LlmError::Template(format!(
                            "responsiveness field {name} must allow exactly {allowed:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when `parsed` contains everything the task needs: the single
    /// classification for stage one; for stage two, `is_duplicate`, and the
    /// other two fields unless the answer is a duplicate.
    pub fn is_complete(&self, parsed: &BTreeMap<String, String>) -> bool {
        match self.task {
            TaskKind::BugIdentification => {
                let field = self.output_schema.fields.keys().next().expect("one field");
                parsed.contains_key(field)
            }
            TaskKind::Responsiveness => match parsed.get("is_duplicate").map(String::as_str) {
                None => false,
                Some("true") => true,
                Some(_) => parsed.contains_key("bug_type") && parsed.contains_key("was_fixed"),
            },
        }
    }
}

/// Load `bug_identification.*.json` / `responsiveness.*.json` overrides from
/// a directory, falling back to the compiled-in defaults.
pub fn load_templates(dir: Option<&Path>) -> Result<(PromptTemplate, PromptTemplate), LlmError> {
    let mut bugid = PromptTemplate::default_for(TaskKind::BugIdentification);
    let mut resp = PromptTemplate::default_for(TaskKind::Responsiveness);
    if let Some(dir) = dir {
        for entry in std::fs::read_dir(dir)
            .map_err(|e| LlmError::Template(format!("{}: {e}", dir.display())))?
        {
            let path = entry
                .map_err(|e| LlmError::Template(e.to_string()))?
                .path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let template = PromptTemplate::load(&path)?;
            match template.task {
                TaskKind::BugIdentification => bugid = template,
                TaskKind::Responsiveness => resp = template,
            }
        }
    }
    Ok((bugid, resp))
}
