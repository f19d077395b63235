use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::harness::HarnessLimits;
use crate::llm::ProviderConfig;
use crate::prompt::DEFAULT_FAILURE_BUDGET;
use crate::spec::ClassRef;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    StructureDraft,
    StructureApproved,
    TestsDraft,
    TestsApproved,
    ClassGeneration(usize),
    ClassesDone,
    MainGeneration,
    Done,
    Aborted { resume_at: Box<Phase> },
}

impl Phase {
    /// Position along the happy path; `Aborted` ranks with its resume point.
    pub fn ordinal(&self) -> (u8, usize) {
        match self {
            Phase::Init => (0, 0),
            Phase::StructureDraft => (1, 0),
            Phase::StructureApproved => (2, 0),
            Phase::TestsDraft => (3, 0),
            Phase::TestsApproved => (4, 0),
            Phase::ClassGeneration(i) => (5, *i),
            Phase::ClassesDone => (6, 0),
            Phase::MainGeneration => (7, 0),
            Phase::Done => (8, 0),
            Phase::Aborted { resume_at } => resume_at.ordinal(),
        }
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self, Phase::Aborted { .. })
    }

    /// The documented state-machine edges. `class_count` bounds the class
    /// index.
    pub fn can_transition(&self, to: &Phase, class_count: usize) -> bool {
        use Phase::*;
        if let Aborted { resume_at } = to {
            return !self.is_aborted()
                && **resume_at == *self
                && !matches!(self, StructureDraft | TestsDraft | Done);
        }
        match (self, to) {
            (Init, StructureDraft)
            | (StructureDraft, StructureApproved)
            | (StructureApproved, TestsDraft)
            | (TestsDraft, TestsApproved)
            | (ClassesDone, MainGeneration)
            | (MainGeneration, Done) => true,
            (TestsApproved, ClassGeneration(0)) => class_count > 0,
            (TestsApproved, ClassesDone) => class_count == 0,
            (ClassGeneration(i), ClassGeneration(j)) => *j == i + 1 && *j < class_count,
            (ClassGeneration(i), ClassesDone) => i + 1 == class_count,
            (Aborted { resume_at }, target) => **resume_at == *target,
            _ => false,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Init => f.write_str("init"),
            Phase::StructureDraft => f.write_str("structure_draft"),
            Phase::StructureApproved => f.write_str("structure_approved"),
            Phase::TestsDraft => f.write_str("tests_draft"),
            Phase::TestsApproved => f.write_str("tests_approved"),
            Phase::ClassGeneration(i) => write!(f, "class_generation[{i}]"),
            Phase::ClassesDone => f.write_str("classes_done"),
            Phase::MainGeneration => f.write_str("main_generation"),
            Phase::Done => f.write_str("done"),
            Phase::Aborted { resume_at } => write!(f, "aborted(at {resume_at})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArtifactKind {
    Structure,
    AcceptanceTests,
    UnitTests { class: ClassRef },
    ClassCode { class: ClassRef },
    MainCode,
}

impl ArtifactKind {
    pub fn id(&self) -> String {
        match self {
            ArtifactKind::Structure => "structure".into(),
            ArtifactKind::AcceptanceTests => "acceptance_tests".into(),
            ArtifactKind::UnitTests { class } => format!("unit_tests:{class}"),
            ArtifactKind::ClassCode { class } => format!("class_code:{class}"),
            ArtifactKind::MainCode => "main_code".into(),
        }
    }

    pub fn is_test(&self) -> bool {
        matches!(self, ArtifactKind::AcceptanceTests | ArtifactKind::UnitTests { .. })
    }

    /// Structure and tests: the only artifacts a human reviews or edits.
    pub fn is_reviewable(&self) -> bool {
        !self.is_production()
    }

    pub fn is_production(&self) -> bool {
        matches!(self, ArtifactKind::ClassCode { .. } | ArtifactKind::MainCode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    /// Edited by a human, not yet approved.
    PendingModified,
    ApprovedUnmodified,
    ApprovedModified,
    /// Production code: machine-written, verified by tests only.
    Regenerated,
}

impl ReviewStatus {
    pub fn is_pending(self) -> bool {
        matches!(self, ReviewStatus::Pending | ReviewStatus::PendingModified)
    }

    pub fn is_approved(self) -> bool {
        matches!(self, ReviewStatus::ApprovedUnmodified | ReviewStatus::ApprovedModified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    ExtractionFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationAttempt {
    pub round: u32,
    pub attempt: u32,
    pub transcript_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_run: Option<String>,
    pub verdict: Verdict,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub kind: ArtifactKind,
    /// Workspace-relative, `/`-separated.
    pub path: String,
    /// Content hash as last written or accepted by the orchestrator.
    pub hash: Option<String>,
    /// Content hash as last written by the generator.
    pub generated_hash: Option<String>,
    pub review_status: ReviewStatus,
    #[serde(default)]
    pub attempts: Vec<GenerationAttempt>,
}

impl Artifact {
    pub fn new(kind: ArtifactKind, path: String) -> Self {
        let review_status = if kind.is_production() {
            ReviewStatus::Regenerated
        } else {
            ReviewStatus::Pending
        };
        Self {
            id: kind.id(),
            kind,
            path,
            hash: None,
            generated_hash: None,
            review_status,
            attempts: Vec::new(),
        }
    }

    pub fn attempts_in_round(&self, round: u32) -> impl Iterator<Item = &GenerationAttempt> {
        self.attempts.iter().filter(move |a| a.round == round)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guidance {
    EditTests,
    EditStructure,
    EditProjectConfig,
    CheckProvider,
}

impl fmt::Display for Guidance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Guidance::EditTests => "edit the failing test files (add guiding comments or fix inconsistencies)",
            Guidance::EditStructure => "edit structure.yaml (before tests are approved)",
            Guidance::EditProjectConfig => "edit project.yaml",
            Guidance::CheckProvider => "check the provider configuration or fixture",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortReport {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
    pub attempts: u32,
    pub message: String,
    pub failure_excerpt: String,
    pub guidance: Vec<Guidance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Checkpoint,
    PostAbort,
}

/// One human edit of one artifact, detected by a content-hash change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub artifact: String,
    pub kind: InterventionKind,
    pub at: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_attempts: u32,
    pub failure_budget_chars: usize,
    pub limits: HarnessLimits,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            failure_budget_chars: DEFAULT_FAILURE_BUDGET,
            limits: HarnessLimits::default(),
        }
    }
}

/// The resumable checkpoint unit, persisted as `.onx/session.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub revision: u64,
    pub project_hash: String,
    pub profile_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    pub phase: Phase,
    pub artifacts: Vec<Artifact>,
    /// Generation rounds started and committed, per artifact id. A round
    /// restarts the attempt count; failed rounds count too, so a resumed
    /// run never reuses a round number.
    #[serde(default)]
    pub rounds: BTreeMap<String, u32>,
    pub provider: ProviderConfig,
    pub budgets: Budgets,
    #[serde(default)]
    pub interventions: Vec<Intervention>,
    #[serde(default)]
    pub aborts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_abort: Option<AbortReport>,
}

impl SessionState {
    pub fn artifact(&self, id: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.id == id)
    }

    pub fn artifact_mut(&mut self, id: &str) -> Option<&mut Artifact> {
        self.artifacts.iter_mut().find(|a| a.id == id)
    }

    pub fn pending_reviews(&self) -> Vec<&Artifact> {
        self.artifacts
            .iter()
            .filter(|a| a.kind.is_reviewable() && a.review_status.is_pending())
            .collect()
    }

    pub fn intervention_count(&self) -> usize {
        self.interventions.len()
    }
}
