//! Prompt templates for every generation stage.
//!
//! A template file is plain text whose first line declares the variables it
//! uses:
//!
//! ```text
//! required_vars: class_name, unit_tests
//! Implement {class_name} so that these tests pass:
//! {unit_tests}
//! ```
//!
//! The declared set must match the placeholders in the body exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::TestReport;
use crate::template::{self, Parsed};

/// Default tail budget for failure excerpts, in characters.
pub const DEFAULT_FAILURE_BUDGET: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    StructureGen,
    AcceptanceTestsGen,
    UnitTestsGen,
    ClassCodeGen,
    ClassCodeRepair,
    MainGen,
    MainRepair,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::StructureGen,
        TemplateId::AcceptanceTestsGen,
        TemplateId::UnitTestsGen,
        TemplateId::ClassCodeGen,
        TemplateId::ClassCodeRepair,
        TemplateId::MainGen,
        TemplateId::MainRepair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::StructureGen => "structure_gen",
            TemplateId::AcceptanceTestsGen => "acceptance_tests_gen",
            TemplateId::UnitTestsGen => "unit_tests_gen",
            TemplateId::ClassCodeGen => "class_code_gen",
            TemplateId::ClassCodeRepair => "class_code_repair",
            TemplateId::MainGen => "main_gen",
            TemplateId::MainRepair => "main_repair",
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            TemplateId::StructureGen => include_str!("../../prompts/structure_gen.txt"),
            TemplateId::AcceptanceTestsGen => include_str!("../../prompts/acceptance_tests_gen.txt"),
            TemplateId::UnitTestsGen => include_str!("../../prompts/unit_tests_gen.txt"),
            TemplateId::ClassCodeGen => include_str!("../../prompts/class_code_gen.txt"),
            TemplateId::ClassCodeRepair => include_str!("../../prompts/class_code_repair.txt"),
            TemplateId::MainGen => include_str!("../../prompts/main_gen.txt"),
            TemplateId::MainRepair => include_str!("../../prompts/main_repair.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template `{0}` is missing")]
    MissingTemplate(TemplateId),
    #[error("cannot read template `{id}`: {source}")]
    Io {
        id: TemplateId,
        #[source]
        source: std::io::Error,
    },
    #[error("template `{id}`: first line must be `required_vars: a, b, ...`")]
    MissingHeader { id: TemplateId },
    #[error("template `{id}`: {source}")]
    Syntax {
        id: TemplateId,
        #[source]
        source: template::PlaceholderError,
    },
    #[error("template `{id}` uses {{{var}}} without declaring it")]
    Undeclared { id: TemplateId, var: String },
    #[error("template `{id}` declares `{var}` but never uses it")]
    Unused { id: TemplateId, var: String },
    #[error("rendering `{id}`: no value for variable `{var}`")]
    MissingVariable { id: TemplateId, var: String },
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
    pub required_vars: BTreeSet<String>,
    parsed: Parsed,
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, file_text: &str) -> Result<Self, PromptError> {
        let (header, body) = file_text.split_once('\n').unwrap_or((file_text, ""));
        let vars = header
            .trim_end()
            .strip_prefix("required_vars:")
            .ok_or(PromptError::MissingHeader { id })?;
        let required_vars: BTreeSet<String> = vars
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        let parsed = template::parse(body).map_err(|source| PromptError::Syntax { id, source })?;
        let used = parsed.vars();
        if let Some(var) = used.iter().find(|v| !required_vars.contains(**v)) {
            return Err(PromptError::Undeclared {
                id,
                var: var.to_string(),
            });
        }
        if let Some(var) = required_vars.iter().find(|v| !used.contains(v.as_str())) {
            return Err(PromptError::Unused {
                id,
                var: var.clone(),
            });
        }
        Ok(Self {
            id,
            text: body.to_string(),
            required_vars,
            parsed,
        })
    }

    pub fn render(&self, ctx: &PromptContext) -> Result<String, PromptError> {
        self.parsed
            .substitute(|name| ctx.get(name))
            .map_err(|var| PromptError::MissingVariable { id: self.id, var })
    }
}

/// Placeholder values for one render.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptContext(BTreeMap<String, String>);

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// All seven templates, immutable once loaded.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn defaults() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| {
                let t = PromptTemplate::parse(id, id.default_text())
                    .expect("shipped templates are consistent");
                (id, t)
            })
            .collect();
        Self { templates }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, ctx: &PromptContext) -> Result<String, PromptError> {
        self.get(id).render(ctx)
    }
}

/// Loads `<dir>/<template_id>.txt` for every stage.
pub fn load_templates(dir: &Path) -> Result<TemplateRegistry, PromptError> {
    let mut templates = BTreeMap::new();
    for id in TemplateId::ALL {
        let path = dir.join(format!("{id}.txt"));
        if !path.is_file() {
            return Err(PromptError::MissingTemplate(id));
        }
        let text = fs::read_to_string(&path).map_err(|source| PromptError::Io { id, source })?;
        templates.insert(id, PromptTemplate::parse(id, &text)?);
    }
    Ok(TemplateRegistry { templates })
}

/// Tail of the runner output, at most `limit` characters. A marker line is
/// prepended when anything was cut.
pub fn truncate_failure(report: &TestReport, limit: usize) -> String {
    truncate_tail(&report.raw_output, limit)
}

pub fn truncate_tail(raw: &str, limit: usize) -> String {
    assert!(limit > 0, "failure budget must be positive");
    let total = raw.chars().count();
    if total <= limit {
        return raw.to_string();
    }
    let marker = format!("[... output truncated; last part of {total} characters follows ...]\n");
    let marker_len = marker.chars().count();
    if marker_len >= limit {
        return raw.chars().skip(total - limit).collect();
    }
    let keep = limit - marker_len;
    let tail: String = raw.chars().skip(total - keep).collect();
    format!("{marker}{tail}")
}
