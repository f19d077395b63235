//! Test-oriented code generation: a project description becomes a
//! reviewed structure plan and reviewed tests, and production code is then
//! generated by a language model until those tests pass.
//!
//! The modules, bottom-up:
//!
//! - [`spec`]: `project.yaml`, `structure.yaml` and target profiles.
//! - [`prompt`]: the stage prompt templates.
//! - [`llm`]: providers (live HTTP, replay, recording) and the transcript.
//! - [`harness`]: workspace preparation and test execution.
//! - [`store`]: the session record, event feed, lock and metrics.
//! - [`pipeline`]: the state machine tying them together.

pub mod api;
pub mod cli;
pub mod harness;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod spec;
pub mod store;
mod template;
