use std::collections::HashMap;

use heck::ToSnakeCase;

use super::profile::is_workspace_relative;
use super::{ClassRef, StructurePlan, TargetProfile};

/// Workspace-relative source and unit-test paths of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPaths {
    pub source: String,
    pub unit_test: String,
}

/// Every path the generator writes for a plan, in generation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMap {
    pub classes: Vec<(ClassRef, ClassPaths)>,
    pub main_entry: String,
    pub acceptance_tests: String,
}

impl PathMap {
    pub fn get(&self, class: &ClassRef) -> Option<&ClassPaths> {
        self.classes.iter().find(|(c, _)| c == class).map(|(_, p)| p)
    }

    pub fn unit_tests(&self) -> Vec<String> {
        self.classes.iter().map(|(_, p)| p.unit_test.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("structure plan has no packages")]
    EmptyPlan,
    #[error("{first} and {second} both map to {path}")]
    Collision {
        path: String,
        first: String,
        second: String,
    },
    #[error("{owner} maps outside the workspace: {path}")]
    Escapes { owner: String, path: String },
}

pub fn resolve_paths(plan: &StructurePlan, profile: &TargetProfile) -> Result<PathMap, PathError> {
    if plan.packages.is_empty() {
        return Err(PathError::EmptyPlan);
    }
    let mut owners: HashMap<String, String> = HashMap::new();
    let mut claim = |path: String, owner: String| -> Result<String, PathError> {
        if !is_workspace_relative(&path) {
            return Err(PathError::Escapes { owner, path });
        }
        if let Some(first) = owners.insert(path.clone(), owner.clone()) {
            return Err(PathError::Collision {
                path,
                first,
                second: owner,
            });
        }
        Ok(path)
    };

    let main_entry = claim(
        profile.render_path(&profile.main_entry_path, &[]),
        "main entry".into(),
    )?;
    let acceptance_tests = claim(
        profile.render_path(&profile.acceptance_test_path, &[]),
        "acceptance tests".into(),
    )?;
    let mut classes = Vec::new();
    for class in plan.class_refs() {
        let snake = class.class.to_snake_case();
        let vars = [
            ("package", class.package.as_str()),
            ("class", class.class.as_str()),
            ("class_snake", snake.as_str()),
        ];
        let source = claim(
            profile.render_path(&profile.source_layout.source, &vars),
            format!("{class} source"),
        )?;
        let unit_test = claim(
            profile.render_path(&profile.source_layout.unit_test, &vars),
            format!("{class} tests"),
        )?;
        classes.push((class, ClassPaths { source, unit_test }));
    }
    Ok(PathMap {
        classes,
        main_entry,
        acceptance_tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{ClassPlan, PackagePlan};

    fn plan(packages: &[(&str, &[&str])]) -> StructurePlan {
        StructurePlan {
            packages: packages
                .iter()
                .map(|(p, classes)| PackagePlan {
                    name: p.to_string(),
                    description: "pkg".into(),
                    classes: classes
                        .iter()
                        .map(|c| ClassPlan {
                            name: c.to_string(),
                            description: "cls".into(),
                            methods: vec![],
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn default_profile_layout() {
        let map = resolve_paths(&plan(&[("bib", &["EntryStore"])]), &TargetProfile::default_profile())
            .unwrap();
        let paths = map.get(&ClassRef::new("bib", "EntryStore")).unwrap();
        assert_eq!(paths.source, "bib/entry_store.py");
        assert_eq!(paths.unit_test, "tests/test_entry_store.py");
        assert_eq!(map.main_entry, "main.py");
        assert_eq!(map.acceptance_tests, "tests/test_acceptance.py");
    }

    #[test]
    fn empty_plan_is_rejected() {
        let err = resolve_paths(&plan(&[]), &TargetProfile::default_profile()).unwrap_err();
        assert_eq!(err, PathError::EmptyPlan);
    }

    #[test]
    fn two_classes_disjoint() {
        let map = resolve_paths(&plan(&[("p", &["A", "B"])]), &TargetProfile::default_profile())
            .unwrap();
        assert_eq!(map.classes.len(), 2);
        let a = &map.classes[0].1;
        let b = &map.classes[1].1;
        assert_ne!(a.source, b.source);
        assert_ne!(a.unit_test, b.unit_test);
    }

    #[test]
    fn same_class_in_two_packages_collides_on_tests() {
        let err = resolve_paths(
            &plan(&[("p", &["Store"]), ("q", &["Store"])]),
            &TargetProfile::default_profile(),
        )
        .unwrap_err();
        assert!(matches!(err, PathError::Collision { ref path, .. } if path == "tests/test_store.py"));
    }

    #[test]
    fn class_named_acceptance_collides() {
        let err = resolve_paths(&plan(&[("p", &["Acceptance"])]), &TargetProfile::default_profile())
            .unwrap_err();
        assert!(matches!(err, PathError::Collision { .. }));
    }
}
