//! Prompt variables for each stage.

use std::fs;
use std::path::Path;

use crate::prompt::PromptContext;
use crate::spec::{ClassPlan, ClassRef, PathMap, ProjectSpec, TargetProfile};

fn bullets(items: &[String]) -> String {
    if items.is_empty() {
        return "(none)".into();
    }
    items
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn system_prompt(profile: &TargetProfile) -> String {
    format!(
        "You are a careful {} programmer working inside an automated, test-driven code \
         generator. Reply with exactly one fenced code block holding the complete requested \
         file and nothing outside it.",
        profile.language
    )
}

pub(crate) fn base(project: &ProjectSpec, profile: &TargetProfile) -> PromptContext {
    PromptContext::new()
        .with("project_name", project.name.clone())
        .with("language", profile.language.clone())
        .with("project_description", bullets(&project.description))
        .with("dependencies", bullets(&project.dependencies))
        .with("outputs", bullets(&project.outputs))
        .with("acceptance_tests", bullets(&project.acceptance_tests))
        .with("identifier_pattern", profile.identifier_pattern.clone())
}

pub(crate) fn class_vars(
    ctx: &mut PromptContext,
    class: &ClassRef,
    plan: &ClassPlan,
    source_path: &str,
    test_path: &str,
) {
    ctx.set("package_name", class.package.clone());
    ctx.set("class_name", class.class.clone());
    ctx.set(
        "class_plan",
        serde_yaml::to_string(plan).expect("class plan serializes"),
    );
    ctx.set("source_path", source_path);
    ctx.set("test_path", test_path);
}

/// Contents of the given workspace files, each under a header naming its
/// path. Missing files are skipped.
pub(crate) fn file_listing<'a>(root: &Path, paths: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for path in paths {
        let Ok(content) = fs::read_to_string(root.join(path)) else {
            continue;
        };
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("File `{path}`:\n```\n{content}"));
        if !content.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    if out.is_empty() {
        out.push_str("(none)");
    }
    out
}

pub(crate) fn class_sources_before(paths: &PathMap, index: usize) -> Vec<&str> {
    paths.classes[..index]
        .iter()
        .map(|(_, p)| p.source.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bullets_and_none() {
        assert_eq!(bullets(&[]), "(none)");
        assert_eq!(bullets(&["a".into(), "b".into()]), "- a\n- b");
    }

    #[test]
    fn listing_skips_missing() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.py"), "x = 1\n").unwrap();
        let text = file_listing(dir.path(), ["a.py", "missing.py"]);
        assert_eq!(text, "File `a.py`:\n```\nx = 1\n```\n");
        assert_eq!(file_listing(dir.path(), ["missing.py"]), "(none)");
    }
}
