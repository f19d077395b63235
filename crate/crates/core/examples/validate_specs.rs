//! Parses the shipped project config and shows how schema violations are
//! reported by field path.
//!
//! ```sh
//! cargo run --example validate_specs
//! ```

use std::path::Path;

use onx::spec::{parse_project_spec, IdentifierRule, ProjectSpec, SchemaError, StructurePlan};

const BROKEN_STRUCTURE: &str = "\
packages:
  - name: storage
    description: Persistence.
    classes:
      - name: entry store
        description: Keeps entries.
        methods:
          - name: add
            description: ''
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex/project.yaml");
    let project = parse_project_spec(&path)?;
    println!("{} ({} profile)", project.name, project.target_profile);
    println!("  dependencies: {:?}", project.dependencies);
    println!("  acceptance tests: {}", project.acceptance_tests.len());

    match ProjectSpec::from_yaml_str("name: 9lives\ndescription: []\nacceptance_tests: [ok]\n") {
        Err(SchemaError::Invalid { errors, .. }) => {
            println!("project config rejected:");
            for e in errors {
                println!("  {}: {}", e.path, e.message);
            }
        }
        other => println!("unexpected: {other:?}"),
    }

    let rule = IdentifierRule::default();
    match StructurePlan::from_yaml_str(BROKEN_STRUCTURE, &rule) {
        Err(SchemaError::Invalid { errors, .. }) => {
            println!("structure rejected (identifiers must match {}):", rule.pattern());
            for e in errors {
                println!("  {}: {}", e.path, e.message);
            }
        }
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
