use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{from_yaml, is_blank, FieldError, SchemaError};

pub const STRUCTURE_FILE: &str = "structure.yaml";

/// Planned packages, classes and methods of the generated codebase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructurePlan {
    pub packages: Vec<PackagePlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackagePlan {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub classes: Vec<ClassPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPlan {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub methods: Vec<MethodPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodPlan {
    pub name: String,
    pub description: String,
}

/// Identifier rule applied to package, class and method names.
#[derive(Debug, Clone)]
pub struct IdentifierRule(Regex);

impl IdentifierRule {
    pub const DEFAULT_PATTERN: &'static str = "^[A-Za-z_][A-Za-z0-9_]*$";

    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Regex::new(pattern).map(Self)
    }

    pub fn is_valid(&self, name: &str) -> bool {
        self.0.is_match(name)
    }

    pub fn pattern(&self) -> &str {
        self.0.as_str()
    }
}

impl Default for IdentifierRule {
    fn default() -> Self {
        Self::new(Self::DEFAULT_PATTERN).expect("static pattern")
    }
}

/// `package.Class`, the stable handle for one planned class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassRef {
    pub package: String,
    pub class: String,
}

impl ClassRef {
    pub fn new(package: impl Into<String>, class: impl Into<String>) -> Self {
        Self {
            package: package.into(),
            class: class.into(),
        }
    }
}

impl fmt::Display for ClassRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.package, self.class)
    }
}

impl FromStr for ClassRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((p, c)) if !p.is_empty() && !c.is_empty() && !c.contains('.') => {
                Ok(ClassRef::new(p, c))
            }
            _ => Err(format!("expected `package.Class`, got {s:?}")),
        }
    }
}

impl TryFrom<String> for ClassRef {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ClassRef> for String {
    fn from(c: ClassRef) -> String {
        c.to_string()
    }
}

impl StructurePlan {
    pub fn from_yaml_str(text: &str, rule: &IdentifierRule) -> Result<Self, SchemaError> {
        let plan: StructurePlan = from_yaml(text, "structure")?;
        let errors = plan.violations(rule);
        if errors.is_empty() {
            Ok(plan)
        } else {
            Err(SchemaError::Invalid {
                document: "structure",
                errors,
            })
        }
    }

    pub fn violations(&self, rule: &IdentifierRule) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if self.packages.is_empty() {
            errors.push(FieldError::new("packages", "must list at least one package"));
        }
        let mut package_names = HashSet::new();
        for (pi, package) in self.packages.iter().enumerate() {
            let at = format!("packages[{pi}]");
            check_name(&mut errors, &at, &package.name, rule, &mut package_names);
            check_description(&mut errors, &at, &package.description);
            let mut class_names = HashSet::new();
            for (ci, class) in package.classes.iter().enumerate() {
                let at = format!("{at}.classes[{ci}]");
                check_name(&mut errors, &at, &class.name, rule, &mut class_names);
                check_description(&mut errors, &at, &class.description);
                let mut method_names = HashSet::new();
                for (mi, method) in class.methods.iter().enumerate() {
                    let at = format!("{at}.methods[{mi}]");
                    check_name(&mut errors, &at, &method.name, rule, &mut method_names);
                    check_description(&mut errors, &at, &method.description);
                }
            }
        }
        errors
    }

    pub fn class(&self, class: &ClassRef) -> Option<&ClassPlan> {
        self.packages
            .iter()
            .find(|p| p.name == class.package)?
            .classes
            .iter()
            .find(|c| c.name == class.class)
    }

    /// Every class in document order: packages first, then classes.
    pub fn class_refs(&self) -> Vec<ClassRef> {
        self.packages
            .iter()
            .flat_map(|p| p.classes.iter().map(|c| ClassRef::new(&p.name, &c.name)))
            .collect()
    }
}

fn check_name(
    errors: &mut Vec<FieldError>,
    at: &str,
    name: &str,
    rule: &IdentifierRule,
    seen: &mut HashSet<String>,
) {
    let path = format!("{at}.name");
    if !rule.is_valid(name) {
        errors.push(FieldError::new(
            path,
            format!("{name:?} is not a valid identifier (pattern {})", rule.pattern()),
        ));
    } else if !seen.insert(name.to_string()) {
        errors.push(FieldError::new(path, format!("duplicate name {name:?}")));
    }
}

fn check_description(errors: &mut Vec<FieldError>, at: &str, description: &str) {
    if is_blank(description) {
        errors.push(FieldError::new(format!("{at}.description"), "must not be blank"));
    }
}

pub fn parse_structure(path: &Path, rule: &IdentifierRule) -> Result<StructurePlan, SchemaError> {
    let text = fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    StructurePlan::from_yaml_str(&text, rule)
}

/// Canonical text: schema key order, document list order.
pub fn serialize_structure(plan: &StructurePlan) -> String {
    serde_yaml::to_string(plan).expect("structure plan is always representable as YAML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn method(name: &str) -> MethodPlan {
        MethodPlan {
            name: name.into(),
            description: format!("Does {name}."),
        }
    }

    fn one_class_plan() -> StructurePlan {
        StructurePlan {
            packages: vec![PackagePlan {
                name: "bib".into(),
                description: "Bibliography handling.".into(),
                classes: vec![ClassPlan {
                    name: "EntryStore".into(),
                    description: "Persists entries.".into(),
                    methods: vec![method("add")],
                }],
            }],
        }
    }

    #[test]
    fn single_class_roundtrip() {
        let plan = one_class_plan();
        let text = serialize_structure(&plan);
        let back = StructurePlan::from_yaml_str(&text, &IdentifierRule::default()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn duplicate_class_rejected() {
        let text = "\
packages:
- name: bib
  description: d
  classes:
  - name: Store
    description: a
  - name: Store
    description: b
";
        let err = StructurePlan::from_yaml_str(text, &IdentifierRule::default()).unwrap_err();
        assert_eq!(err.paths(), vec!["packages[0].classes[1].name"]);
    }

    #[test]
    fn empty_packages_rejected() {
        let err = StructurePlan::from_yaml_str("packages: []\n", &IdentifierRule::default())
            .unwrap_err();
        assert_eq!(err.paths(), vec!["packages"]);
    }

    #[test]
    fn bad_identifier_rejected() {
        let mut plan = one_class_plan();
        plan.packages[0].classes[0].methods[0].name = "2fast".into();
        let errs = plan.violations(&IdentifierRule::default());
        assert_eq!(errs[0].path, "packages[0].classes[0].methods[0].name");
    }

    #[test]
    fn unknown_nested_key_path() {
        let text = "\
packages:
- name: bib
  description: d
  classes:
  - name: Store
    description: a
    fields: []
";
        let err = StructurePlan::from_yaml_str(text, &IdentifierRule::default()).unwrap_err();
        assert_eq!(err.paths(), vec!["packages[0].classes[0].fields"]);
    }

    #[test]
    fn class_ref_parse_display() {
        let c: ClassRef = "bib.EntryStore".parse().unwrap();
        assert_eq!(c, ClassRef::new("bib", "EntryStore"));
        assert_eq!(c.to_string(), "bib.EntryStore");
        assert!("nodot".parse::<ClassRef>().is_err());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[A-Za-z_][A-Za-z0-9_]{0,8}"
    }

    fn statement() -> impl Strategy<Value = String> {
        // includes characters YAML must quote
        "[A-Za-z][A-Za-z0-9 :#'\",.{}-]{0,30}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    fn unique_by_name<T>(items: Vec<(String, T)>) -> Vec<(String, T)> {
        let mut seen = HashSet::new();
        items.into_iter().filter(|(n, _)| seen.insert(n.clone())).collect()
    }

    fn plan_strategy() -> impl Strategy<Value = StructurePlan> {
        let method = (ident(), statement());
        let class = (
            ident(),
            statement(),
            prop::collection::vec(method, 0..4),
        );
        let package = (
            ident(),
            statement(),
            prop::collection::vec(class, 0..=4),
        );
        prop::collection::vec(package, 1..=3).prop_map(|packages| {
            let packages = unique_by_name(
                packages
                    .into_iter()
                    .map(|(n, d, c)| (n, (d, c)))
                    .collect(),
            );
            StructurePlan {
                packages: packages
                    .into_iter()
                    .map(|(name, (description, classes))| PackagePlan {
                        name,
                        description,
                        classes: unique_by_name(
                            classes.into_iter().map(|(n, d, m)| (n, (d, m))).collect(),
                        )
                        .into_iter()
                        .map(|(name, (description, methods))| ClassPlan {
                            name,
                            description,
                            methods: unique_by_name(methods)
                                .into_iter()
                                .map(|(name, description)| MethodPlan { name, description })
                                .collect(),
                        })
                        .collect(),
                    })
                    .collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn random_plans_roundtrip_byte_stably(plan in plan_strategy()) {
            let rule = IdentifierRule::default();
            prop_assert!(plan.violations(&rule).is_empty());
            let text = serialize_structure(&plan);
            let back = StructurePlan::from_yaml_str(&text, &rule).unwrap();
            prop_assert_eq!(&back, &plan);
            prop_assert_eq!(serialize_structure(&back), text);
        }
    }
}
