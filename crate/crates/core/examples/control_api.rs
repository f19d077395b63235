//! Serves the control API on a loopback port and drives a replayed
//! session through it the way the review UI does: post a step, long-poll
//! the event feed, approve pending artifacts.
//!
//! ```sh
//! cargo run --example control_api
//! ```

use std::fs;
use std::path::Path;

use onx::api::spawn_server;
use onx::llm::ProviderConfig;
use onx::pipeline::PipelineOptions;
use reqwest::blocking::Client;
use serde_json::Value;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex");
    let dir = tempfile::tempdir()?;
    fs::copy(fixtures.join("project.yaml"), dir.path().join("project.yaml"))?;
    let options = PipelineOptions {
        provider: Some(ProviderConfig::replay(&fixtures)),
        ..Default::default()
    };
    let server = spawn_server(dir.path(), options, "127.0.0.1:0".parse()?)?;
    println!("listening on {}", server.addr());
    let http = Client::new();

    let mut cursor = 0;
    'session: loop {
        let posted: Value = http.post(server.url("/api/step")).send()?.error_for_status()?.json()?;
        let command = &posted["command_id"];
        let outcome = loop {
            let page: Value = http
                .get(server.url(&format!("/api/events?cursor={cursor}&timeout_ms=5000")))
                .send()?
                .json()?;
            cursor = page["next_cursor"].as_u64().unwrap_or(cursor);
            let done = page["events"].as_array().into_iter().flatten().find(|e| {
                e["type"] == "step_completed" && &e["command_id"] == command
            });
            if let Some(e) = done {
                break e["outcome"].clone();
            }
        };
        match outcome["outcome"].as_str() {
            Some("awaiting_review") => {
                for id in outcome["pending"].as_array().into_iter().flatten() {
                    let id = id.as_str().unwrap_or_default();
                    http.post(server.url(&format!("/api/artifacts/{id}/approve")))
                        .send()?
                        .error_for_status()?;
                    println!("  approved {id}");
                }
            }
            Some("advanced") => {
                println!("{} -> {}", outcome["from"], outcome["to"]);
                if outcome["to"] == "done" {
                    break 'session;
                }
            }
            Some("done") => break,
            _ => return Err(format!("unexpected outcome {outcome}").into()),
        }
    }

    let metrics: Value = http.get(server.url("/api/metrics")).send()?.json()?;
    println!("session metrics: {}", metrics["session"]);
    Ok(())
}
