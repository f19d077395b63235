use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{from_yaml, is_blank, FieldError, SchemaError, DEFAULT_PROFILE_ID};

pub const PROJECT_FILE: &str = "project.yaml";

/// Parsed `project.yaml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSpec {
    pub name: String,
    #[serde(default = "default_profile")]
    pub target_profile: String,
    pub description: Vec<String>,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub acceptance_tests: Vec<String>,
}

fn default_profile() -> String {
    DEFAULT_PROFILE_ID.to_string()
}

fn project_name_rule() -> Regex {
    Regex::new(r"^[A-Za-z][A-Za-z0-9_.-]*$").expect("static pattern")
}

impl ProjectSpec {
    pub fn from_yaml_str(text: &str) -> Result<Self, SchemaError> {
        let spec: ProjectSpec = from_yaml(text, "project config")?;
        let errors = spec.violations();
        if errors.is_empty() {
            Ok(spec)
        } else {
            Err(SchemaError::Invalid {
                document: "project config",
                errors,
            })
        }
    }

    pub fn violations(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if is_blank(&self.name) {
            errors.push(FieldError::new("name", "must not be blank"));
        } else if !project_name_rule().is_match(&self.name) {
            errors.push(FieldError::new(
                "name",
                "must start with a letter and contain only letters, digits, `_`, `.` or `-`",
            ));
        }
        if is_blank(&self.target_profile) {
            errors.push(FieldError::new("target_profile", "must not be blank"));
        }
        check_statements(&mut errors, "description", &self.description, true);
        check_statements(&mut errors, "outputs", &self.outputs, false);
        check_statements(&mut errors, "acceptance_tests", &self.acceptance_tests, true);
        for (i, dep) in self.dependencies.iter().enumerate() {
            if is_blank(dep) || dep.chars().any(char::is_whitespace) {
                errors.push(FieldError::new(
                    format!("dependencies[{i}]"),
                    "must be a single non-blank package name",
                ));
            }
        }
        errors
    }
}

fn check_statements(errors: &mut Vec<FieldError>, field: &str, items: &[String], required: bool) {
    if required && items.is_empty() {
        errors.push(FieldError::new(field, "must list at least one statement"));
    }
    for (i, item) in items.iter().enumerate() {
        if is_blank(item) {
            errors.push(FieldError::new(format!("{field}[{i}]"), "must not be blank"));
        }
    }
}

pub fn parse_project_spec(path: &Path) -> Result<ProjectSpec, SchemaError> {
    let text = fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ProjectSpec::from_yaml_str(&text)
}

pub fn serialize_project(spec: &ProjectSpec) -> String {
    serde_yaml::to_string(spec).expect("project spec is always representable as YAML")
}

#[derive(Debug, thiserror::Error)]
pub enum ScaffoldError {
    #[error("{} already exists; refusing to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("invalid project name {0:?}")]
    InvalidName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const TEMPLATE: &str = include_str!("project_template.yaml");

/// Writes a commented `project.yaml` for a new project. The result parses
/// only after the empty `description` and `acceptance_tests` lists are
/// filled in.
pub fn scaffold_project_template(dir: &Path, name: &str) -> Result<PathBuf, ScaffoldError> {
    if !project_name_rule().is_match(name) {
        return Err(ScaffoldError::InvalidName(name.to_string()));
    }
    fs::create_dir_all(dir)?;
    let path = dir.join(PROJECT_FILE);
    let text = TEMPLATE
        .replace("__NAME__", name)
        .replace("__PROFILE__", DEFAULT_PROFILE_ID);
    let mut file = match fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
    {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(ScaffoldError::Exists(path))
        }
        Err(e) => return Err(e.into()),
    };
    file.write_all(text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
name: demo
description:
- Greets the user.
outputs:
- Prints a greeting.
acceptance_tests:
- Running the program prints hello.
";

    #[test]
    fn minimal_config_echoes_lists() {
        let spec = ProjectSpec::from_yaml_str(MINIMAL).unwrap();
        assert_eq!(spec.name, "demo");
        assert_eq!(spec.target_profile, DEFAULT_PROFILE_ID);
        assert_eq!(spec.description, vec!["Greets the user."]);
        assert!(spec.dependencies.is_empty());
        assert_eq!(spec.outputs, vec!["Prints a greeting."]);
        assert_eq!(spec.acceptance_tests, vec!["Running the program prints hello."]);
    }

    #[test]
    fn missing_acceptance_tests_names_the_field() {
        let text = "name: demo\ndescription: [x]\n";
        let err = ProjectSpec::from_yaml_str(text).unwrap_err();
        assert_eq!(err.paths(), vec!["acceptance_tests"]);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}extra: 1\n");
        let err = ProjectSpec::from_yaml_str(&text).unwrap_err();
        assert_eq!(err.paths(), vec!["extra"]);
    }

    #[test]
    fn blank_statement_reports_index() {
        let text = MINIMAL.replace("- Running the program prints hello.", "- ok\n- ok\n- '  '");
        let err = ProjectSpec::from_yaml_str(&text).unwrap_err();
        assert_eq!(err.paths(), vec!["acceptance_tests[2]"]);
    }

    #[test]
    fn wrong_type_reports_index() {
        let text = MINIMAL.replace("- Greets the user.", "- [nested]");
        let err = ProjectSpec::from_yaml_str(&text).unwrap_err();
        assert_eq!(err.paths(), vec!["description[0]"]);
    }

    #[test]
    fn syntax_error_has_line() {
        let err = ProjectSpec::from_yaml_str("name: demo\ndescription: [unclosed\n").unwrap_err();
        match err {
            SchemaError::Syntax { line, .. } => assert!(line.is_some()),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn scaffold_fails_validation_on_empty_lists() {
        let dir = tempfile::tempdir().unwrap();
        let path = scaffold_project_template(dir.path(), "bibman").unwrap();
        let err = parse_project_spec(&path).unwrap_err();
        assert_eq!(err.paths(), vec!["description", "acceptance_tests"]);
    }

    #[test]
    fn scaffold_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        scaffold_project_template(dir.path(), "a").unwrap();
        assert!(matches!(
            scaffold_project_template(dir.path(), "a"),
            Err(ScaffoldError::Exists(_))
        ));
    }

    #[test]
    fn filled_scaffold_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = scaffold_project_template(dir.path(), "bibman").unwrap();
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("description: []", "description:\n  - Manages references.")
            .replace("acceptance_tests: []", "acceptance_tests:\n  - Adding an entry succeeds.");
        fs::write(&path, text).unwrap();
        let spec = parse_project_spec(&path).unwrap();
        assert_eq!(spec.name, "bibman");
        assert_eq!(spec.description, vec!["Manages references."]);
        assert_eq!(spec.acceptance_tests, vec!["Adding an entry succeeds."]);
    }

    #[test]
    fn serialize_roundtrips() {
        let spec = ProjectSpec::from_yaml_str(MINIMAL).unwrap();
        let text = serialize_project(&spec);
        assert_eq!(ProjectSpec::from_yaml_str(&text).unwrap(), spec);
        assert_eq!(serialize_project(&ProjectSpec::from_yaml_str(&text).unwrap()), text);
    }
}
