//! Drives a whole session from the shipped BibTeX fixture, stopping at
//! each review checkpoint to list what a reviewer would see.
//!
//! ```sh
//! cargo run --example pipeline_replay
//! ```

use std::fs;
use std::path::Path;

use onx::llm::ProviderConfig;
use onx::pipeline::{Phase, Pipeline, PipelineOptions, StepOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex");
    let dir = tempfile::tempdir()?;
    fs::copy(fixtures.join("project.yaml"), dir.path().join("project.yaml"))?;

    let mut pipeline = Pipeline::open(
        dir.path(),
        PipelineOptions {
            provider: Some(ProviderConfig::replay(&fixtures)),
            ..Default::default()
        },
    )?;

    loop {
        match pipeline.advance()? {
            StepOutcome::Advanced { from, to } => println!("{from:?} -> {to:?}"),
            StepOutcome::AwaitingReview { pending } => {
                for id in &pending {
                    let lines = pipeline.artifact_content(id)?.lines().count();
                    println!("  review {id} ({lines} lines)");
                }
                pipeline.approve_all()?;
            }
            StepOutcome::Aborted { report } => {
                println!("aborted: {report:?}");
                return Ok(());
            }
            StepOutcome::Done => break,
        }
        if *pipeline.phase() == Phase::Done {
            break;
        }
    }

    let metrics = pipeline.metrics();
    println!(
        "done: {} provider calls, {} interventions",
        metrics.session.provider_calls, metrics.session.interventions
    );
    for (id, a) in &metrics.artifacts {
        if a.attempts > 0 {
            println!("  {id}: {} attempt(s) {:?}", a.attempts, a.verdicts);
        }
    }

    let ws = onx::harness::prepare_workspace(
        pipeline.project(),
        pipeline.profile(),
        dir.path(),
        Default::default(),
    )?;
    let timeout = std::time::Duration::from_secs(30);
    let args = ["add", "--key", "knuth84", "--field", "title=Literate Programming"];
    let added = ws.run_program(&args.map(String::from), None, timeout)?;
    print!("$ python main.py {}\n{}", args.join(" "), added.stdout);
    let listed = ws.run_program(&["list".into()], None, timeout)?;
    print!("$ python main.py list\n{}", listed.stdout);
    Ok(())
}
