//! The human-facing file formats: `project.yaml`, `structure.yaml`, and the
//! target-toolchain profile files.

mod paths;
mod profile;
mod project;
mod structure;

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;

pub use paths::{resolve_paths, ClassPaths, PathError, PathMap};
pub use profile::{CommandVars, ProfileError, SourceLayout, TargetProfile, DEFAULT_PROFILE_ID};
pub use project::{
    parse_project_spec, scaffold_project_template, serialize_project, ProjectSpec, ScaffoldError,
    PROJECT_FILE,
};
pub use structure::{
    parse_structure, serialize_structure, ClassPlan, ClassRef, IdentifierRule, MethodPlan,
    PackagePlan, StructurePlan, STRUCTURE_FILE,
};

/// One schema violation, addressed by a field path such as
/// `packages[0].classes[1].name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub(crate) fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "<root>: {}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("YAML syntax error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Syntax { line: Option<usize>, message: String },
    #[error("invalid {document}: {}", join_errors(errors))]
    Invalid {
        document: &'static str,
        errors: Vec<FieldError>,
    },
}

impl SchemaError {
    /// Field paths of every violation (empty for IO and syntax errors).
    pub fn paths(&self) -> Vec<&str> {
        match self {
            SchemaError::Invalid { errors, .. } => errors.iter().map(|e| e.path.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

fn join_errors(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Deserializes YAML, separating syntax errors (with a line number) from
/// schema errors (with a field path).
pub(crate) fn from_yaml<T: DeserializeOwned>(
    text: &str,
    document: &'static str,
) -> Result<T, SchemaError> {
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| SchemaError::Syntax {
        line: e.location().map(|l| l.line()),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize::<_, T>(value).map_err(|e| {
        let parent = e.path().to_string();
        let message = e.into_inner().to_string();
        let path = field_path_for(&parent, &message);
        SchemaError::Invalid {
            document,
            errors: vec![FieldError::new(path, message)],
        }
    })
}

fn field_path_for(parent: &str, message: &str) -> String {
    let parent = if parent == "." { "" } else { parent };
    let named = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|prefix| message.strip_prefix(prefix))
        .and_then(|rest| rest.split('`').next());
    match named {
        // serde_path_to_error already includes the unknown key in the path
        Some(field) if parent.ends_with(field) && message.starts_with("unknown") => parent.into(),
        Some(field) if parent.is_empty() => field.into(),
        Some(field) => format!("{parent}.{field}"),
        None => parent.into(),
    }
}

pub(crate) fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}
