//! Runs the BibTeX fixture twice, the second time with a reviewer adding
//! comments to one unit test file, and compares the two sessions' metrics.
//!
//! ```sh
//! cargo run --example compare_sessions
//! ```

use std::fs;
use std::path::Path;

use onx::llm::ProviderConfig;
use onx::pipeline::{Pipeline, PipelineOptions, RunOutcome, Target};
use onx::store::compare_sessions;

const EDITED: &str = "unit_tests:bib.Entry";

fn session(fixtures: &Path, edit: bool) -> Result<(tempfile::TempDir, Pipeline), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    fs::copy(fixtures.join("project.yaml"), dir.path().join("project.yaml"))?;
    let options = PipelineOptions {
        provider: Some(ProviderConfig::replay(fixtures)),
        ..Default::default()
    };
    let mut p = Pipeline::open(dir.path(), options)?;
    p.run(Target::StructureApproved, true)?;
    if let RunOutcome::AwaitingReview { .. } = p.run(Target::TestsApproved, false)? {
        if edit {
            let text = p.artifact_content(EDITED)?;
            p.replace_artifact(EDITED, &format!("# Entries keep field order as added.\n# Keys are case-sensitive.\n{text}"))?;
        }
        p.approve_all()?;
    }
    match p.run(Target::Done, true)? {
        RunOutcome::Done => Ok((dir, p)),
        other => Err(format!("session stopped: {other:?}").into()),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex");
    let (_a_dir, a) = session(&fixtures, false)?;
    let (_b_dir, b) = session(&fixtures, true)?;
    let (a, b) = (a.metrics(), b.metrics());
    println!("interventions: {} vs {}", a.session.interventions, b.session.interventions);

    let cmp = compare_sessions(&a, &b);
    println!("{} file(s) diverged", cmp.diverged_files);
    for f in cmp.files.iter().filter(|f| f.diverged) {
        println!(
            "  {:<28} lines {:+}  comment density {:.2} -> {:.2}",
            f.path, f.lines_delta, f.density_a, f.density_b
        );
    }
    Ok(())
}
