use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::IdentifierRule;
use crate::template;

pub const DEFAULT_PROFILE_ID: &str = "python-pytest";

const BUILTIN_PROFILES: &[(&str, &str)] = &[
    (
        "python-pytest",
        include_str!("../../profiles/python-pytest.toml"),
    ),
    (
        "python-venv",
        include_str!("../../profiles/python-venv.toml"),
    ),
];

/// Data-defined description of the generated code's toolchain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetProfile {
    pub id: String,
    /// Human-readable language name, used in prompts.
    pub language: String,
    pub source_file_extension: String,
    pub line_comment_prefix: String,
    #[serde(default = "default_identifier_pattern")]
    pub identifier_pattern: String,
    pub test_command: Vec<String>,
    #[serde(default)]
    pub dependency_install_command: Vec<String>,
    #[serde(default)]
    pub environment_create_command: Vec<String>,
    pub run_command: Vec<String>,
    pub source_layout: SourceLayout,
    pub main_entry_path: String,
    pub acceptance_test_path: String,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(skip)]
    identifier_rule: Option<IdentifierRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceLayout {
    pub source: String,
    pub unit_test: String,
}

fn default_identifier_pattern() -> String {
    IdentifierRule::DEFAULT_PATTERN.to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown profile {0:?} (not built in, no profiles/{0}.toml in the workspace)")]
    Unknown(String),
    #[error("cannot read profile {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profile syntax error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid profile field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ProfileError {
    ProfileError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

const COMMAND_SCALARS: &[&str] = &["workspace", "deps_dir", "env_dir"];

impl TargetProfile {
    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let mut profile: TargetProfile = toml::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn builtin(id: &str) -> Option<Self> {
        BUILTIN_PROFILES
            .iter()
            .find(|(name, _)| *name == id)
            .map(|(_, text)| Self::from_toml_str(text).expect("built-in profiles are valid"))
    }

    pub fn default_profile() -> Self {
        Self::builtin(DEFAULT_PROFILE_ID).expect("default profile is built in")
    }

    /// Looks up `id_or_path` as a file path, then as
    /// `<workspace>/profiles/<id>.toml`, then among the built-ins.
    pub fn resolve(id_or_path: &str, workspace: &Path) -> Result<Self, ProfileError> {
        let as_path = Path::new(id_or_path);
        if id_or_path.ends_with(".toml") && as_path.is_file() {
            return Self::load(as_path);
        }
        let local = workspace.join("profiles").join(format!("{id_or_path}.toml"));
        if local.is_file() {
            return Self::load(&local);
        }
        Self::builtin(id_or_path).ok_or_else(|| ProfileError::Unknown(id_or_path.to_string()))
    }

    pub fn identifier_rule(&self) -> IdentifierRule {
        self.identifier_rule
            .clone()
            .unwrap_or_else(|| IdentifierRule::new(&self.identifier_pattern).unwrap_or_default())
    }

    fn validate(&mut self) -> Result<(), ProfileError> {
        if self.id.trim().is_empty() {
            return Err(invalid("id", "must not be blank"));
        }
        if self.source_file_extension.is_empty()
            || !self
                .source_file_extension
                .chars()
                .all(|c| c.is_ascii_alphanumeric())
        {
            return Err(invalid("source_file_extension", "must be alphanumeric"));
        }
        if self.line_comment_prefix.trim().is_empty() {
            return Err(invalid("line_comment_prefix", "must not be blank"));
        }
        let rule = IdentifierRule::new(&self.identifier_pattern)
            .map_err(|e| invalid("identifier_pattern", e.to_string()))?;
        self.identifier_rule = Some(rule);

        if self.test_command.is_empty() {
            return Err(invalid("test_command", "must not be empty"));
        }
        if self.run_command.is_empty() {
            return Err(invalid("run_command", "must not be empty"));
        }
        check_command("test_command", &self.test_command, &["tests", "report"])?;
        check_command(
            "dependency_install_command",
            &self.dependency_install_command,
            &["packages"],
        )?;
        check_command(
            "environment_create_command",
            &self.environment_create_command,
            &[],
        )?;
        check_command("run_command", &self.run_command, &["entry"])?;
        for (key, value) in &self.env {
            check_placeholders(&format!("env.{key}"), value, COMMAND_SCALARS)?;
        }
        let layout_vars = ["package", "class", "class_snake", "ext"];
        check_path_template("source_layout.source", &self.source_layout.source, &layout_vars)?;
        check_path_template(
            "source_layout.unit_test",
            &self.source_layout.unit_test,
            &layout_vars,
        )?;
        check_path_template("main_entry_path", &self.main_entry_path, &["ext"])?;
        check_path_template("acceptance_test_path", &self.acceptance_test_path, &["ext"])?;
        Ok(())
    }

    /// Whether the test command writes a machine-readable report.
    pub fn has_report_flag(&self) -> bool {
        self.test_command.iter().any(|arg| arg.contains("{report}"))
    }

    pub(crate) fn render_path(&self, template_text: &str, vars: &[(&str, &str)]) -> String {
        let parsed = template::parse(template_text).expect("validated at load");
        parsed
            .substitute(|name| {
                if name == "ext" {
                    return Some(self.source_file_extension.as_str());
                }
                vars.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
            })
            .expect("validated at load")
    }
}

fn check_placeholders(field: &str, text: &str, allowed: &[&str]) -> Result<(), ProfileError> {
    let parsed = template::parse(text).map_err(|e| invalid(field, e.to_string()))?;
    for var in parsed.vars() {
        if !allowed.contains(&var) {
            return Err(invalid(
                field,
                format!("undeclared placeholder {{{var}}} (allowed: {})", allowed.join(", ")),
            ));
        }
    }
    Ok(())
}

fn check_command(field: &str, argv: &[String], extra: &[&str]) -> Result<(), ProfileError> {
    let allowed: Vec<&str> = COMMAND_SCALARS.iter().chain(extra).copied().collect();
    for (i, arg) in argv.iter().enumerate() {
        check_placeholders(&format!("{field}[{i}]"), arg, &allowed)?;
    }
    Ok(())
}

fn check_path_template(field: &str, text: &str, allowed: &[&str]) -> Result<(), ProfileError> {
    check_placeholders(field, text, allowed)?;
    if !is_workspace_relative(text) {
        return Err(invalid(field, "must be a workspace-relative path"));
    }
    Ok(())
}

/// Relative, non-empty, and free of `..`, root or prefix components.
pub(crate) fn is_workspace_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && !path.contains('\\')
        && p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Values for rendering a profile command.
#[derive(Debug, Default, Clone)]
pub struct CommandVars {
    scalars: BTreeMap<String, String>,
    lists: BTreeMap<String, Vec<String>>,
}

impl CommandVars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.scalars.insert(name.to_string(), value.into());
        self
    }

    pub fn set_list(mut self, name: &str, values: Vec<String>) -> Self {
        self.lists.insert(name.to_string(), values);
        self
    }

    /// Renders an argv template. An argument that is exactly one list
    /// placeholder expands into one argument per element; elsewhere lists
    /// are joined with spaces.
    pub fn render(&self, argv: &[String]) -> Result<Vec<String>, String> {
        let mut out = Vec::with_capacity(argv.len());
        for arg in argv {
            let parsed = template::parse(arg).map_err(|e| e.to_string())?;
            if let Some(list) = parsed.sole_var().and_then(|v| self.lists.get(v)) {
                out.extend(list.iter().cloned());
                continue;
            }
            let joined: BTreeMap<&str, String> = self
                .lists
                .iter()
                .map(|(k, v)| (k.as_str(), v.join(" ")))
                .collect();
            let rendered = parsed
                .substitute(|name| {
                    self.scalars
                        .get(name)
                        .map(String::as_str)
                        .or_else(|| joined.get(name).map(String::as_str))
                })
                .map_err(|missing| format!("no value for placeholder {{{missing}}}"))?;
            out.push(rendered);
        }
        Ok(out)
    }

    pub fn render_one(&self, text: &str) -> Result<String, String> {
        self.render(&[text.to_string()]).map(|mut v| v.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        let p = TargetProfile::default_profile();
        assert_eq!(p.id, DEFAULT_PROFILE_ID);
        assert_eq!(p.source_file_extension, "py");
        assert_eq!(p.line_comment_prefix, "#");
        assert!(p.has_report_flag());
        assert!(TargetProfile::builtin("python-venv").is_some());
        assert!(TargetProfile::builtin("cobol").is_none());
    }

    fn with(replace: &str, by: &str) -> Result<TargetProfile, ProfileError> {
        let text = BUILTIN_PROFILES[0].1.replace(replace, by);
        assert_ne!(text, BUILTIN_PROFILES[0].1, "replacement target missing");
        TargetProfile::from_toml_str(&text)
    }

    #[test]
    fn undeclared_placeholder_rejected() {
        let err = with("\"{tests}\"", "\"{testz}\"").unwrap_err();
        assert!(err.to_string().contains("testz"), "{err}");
    }

    #[test]
    fn escaping_layout_rejected() {
        let err = with(
            "unit_test = \"tests/test_{class_snake}.{ext}\"",
            "unit_test = \"../test_{class_snake}.{ext}\"",
        )
        .unwrap_err();
        assert!(matches!(err, ProfileError::Invalid { ref field, .. } if field == "source_layout.unit_test"));
        let err = with("main_entry_path = \"main.{ext}\"", "main_entry_path = \"/main.{ext}\"")
            .unwrap_err();
        assert!(matches!(err, ProfileError::Invalid { ref field, .. } if field == "main_entry_path"));
    }

    #[test]
    fn list_placeholders_expand() {
        let vars = CommandVars::new()
            .set("workspace", "/w")
            .set_list("tests", vec!["a.py".into(), "b.py".into()]);
        let argv: Vec<String> = ["run", "{tests}", "--root={workspace}", "x{tests}"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            vars.render(&argv).unwrap(),
            vec!["run", "a.py", "b.py", "--root=/w", "xa.py b.py"]
        );
    }

    #[test]
    fn empty_list_expands_to_nothing() {
        let vars = CommandVars::new().set_list("packages", vec![]);
        assert_eq!(
            vars.render(&["pip".into(), "{packages}".into()]).unwrap(),
            vec!["pip"]
        );
    }

    #[test]
    fn relative_path_check() {
        assert!(is_workspace_relative("bib/entry.py"));
        assert!(!is_workspace_relative("../x"));
        assert!(!is_workspace_relative("a/../../x"));
        assert!(!is_workspace_relative("/etc/passwd"));
        assert!(!is_workspace_relative(""));
    }
}
