//! The staged generation state machine: structure plan, tests, human
//! review, per-class repair loops, and acceptance-gated main generation.
//!
//! Humans review and edit only the structure plan and test files.
//! Production code is never offered for review; it is accepted only when
//! the approved tests pass.

mod context;
mod engine;
mod state;

pub use engine::{
    generation_order, Pipeline, PipelineError, PipelineOptions, RunOutcome, StepOutcome, Target,
    CRASH_ENV, CRASH_EXIT_CODE,
};
pub use state::{
    AbortReport, Artifact, ArtifactKind, Budgets, GenerationAttempt, Guidance, Intervention,
    InterventionKind, Phase, ReviewStatus, SessionState, Verdict, DEFAULT_MAX_ATTEMPTS,
};
