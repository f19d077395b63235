mod common;

use std::fs;
use std::path::Path;

use common::{corpus, corpus_failures, is_project, parse};
use onx::spec::{serialize_project, serialize_structure, IdentifierRule, ProjectSpec, SchemaError, StructurePlan};

#[test]
fn corpus_valid_roundtrips_and_invalid_names_the_field() {
    let (valid, invalid, failures) = corpus_failures();
    assert!(valid >= 5, "valid corpus has {valid} files");
    assert!(invalid >= 10, "invalid corpus has {invalid} files");
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn roundtrip_is_a_fixed_point() {
    for path in corpus("valid") {
        let once = parse(&path).unwrap();
        let twice = if is_project(&path) {
            serialize_project(&ProjectSpec::from_yaml_str(&once).unwrap())
        } else {
            serialize_structure(&StructurePlan::from_yaml_str(&once, &IdentifierRule::default()).unwrap())
        };
        assert_eq!(once, twice, "{}", path.display());
    }
}

#[test]
fn syntax_errors_carry_a_line() {
    let err = ProjectSpec::from_yaml_str("name: x\ndescription: [a\n").unwrap_err();
    assert!(matches!(err, SchemaError::Syntax { line: Some(_), .. }), "{err}");
    assert!(err.paths().is_empty());
}

#[test]
fn stricter_identifier_rule_rejects_leading_underscore() {
    let text = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/valid/structure_empty_classes.yaml"),
    )
    .unwrap();
    let rule = IdentifierRule::new("^[a-zA-Z][a-zA-Z0-9]*$").unwrap();
    let err = StructurePlan::from_yaml_str(&text, &rule).unwrap_err();
    assert_eq!(err.paths(), vec!["packages[1].classes[0].name"]);
}
