//! Answers provider calls from a recorded fixture and extracts the code
//! block from each response.
//!
//! ```sh
//! cargo run --example replay_provider
//! ```

use std::path::Path;

use onx::llm::{extract_code, read_fixture, ChatRequest, Provider, ReplayProvider, FIXTURE_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex").join(FIXTURE_FILE);
    let records = read_fixture(&fixture)?;
    let provider = ReplayProvider::from_records(records.clone());

    for r in &records {
        let request = ChatRequest {
            system: r.system.clone(),
            user: r.prompt.clone(),
        };
        let reply = provider.complete(&r.key(), &request)?;
        let code = extract_code(&reply.text)?;
        println!(
            "#{:<2} {:<34} round {} attempt {} {:<18} {:>3} lines",
            r.seq,
            r.artifact,
            r.round,
            r.attempt,
            r.template.as_str(),
            code.lines().count()
        );
    }

    // Each record answers exactly once.
    let again = provider.complete(&records[0].key(), &ChatRequest { system: String::new(), user: String::new() });
    println!("second call for {}: {}", records[0].artifact, again.unwrap_err());
    Ok(())
}
