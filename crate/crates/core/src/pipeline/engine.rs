use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::context;
use super::state::*;
use crate::harness::{prepare_workspace, HarnessError, HarnessLimits, TestScope, Workspace};
use crate::llm::{
    build_provider, extract_code, CallKey, ChatRequest, Provider, ProviderConfig, ProviderError,
    RecordingProvider, Transcript, TranscriptRecord,
};
use crate::prompt::{load_templates, truncate_failure, PromptContext, TemplateId, TemplateRegistry};
use crate::spec::{
    parse_project_spec, resolve_paths, serialize_structure, ClassRef, PathMap, ProjectSpec,
    SchemaError, StructurePlan, TargetProfile, PROJECT_FILE, STRUCTURE_FILE,
};
use crate::store::{
    atomic_write, compute_metrics, hash_bytes, hash_file, load_session, read_session,
    save_checkpoint, session_exists, EventKind, EventLog, LockError, MetricsReport, StoreError,
    WorkspaceLock, EVENTS_FILE, METRICS_FILE, ONX_DIR, TRANSCRIPT_FILE,
};

/// Environment variable naming a commit at which the process exits, for
/// kill-and-resume testing: `<n>` exits just before the n-th checkpoint
/// save of this process, `<n>:after` just after it.
pub const CRASH_ENV: &str = "ONX_CRASH_AT";

/// Exit status used by the crash hook.
pub const CRASH_EXIT_CODE: i32 = 137;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Contract(String),
    #[error("unknown artifact `{0}`")]
    UnknownArtifact(String),
    #[error("artifact `{0}` is not pending review")]
    NotPending(String),
    #[error("test harness: {0}")]
    Harness(HarnessError),
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl PipelineError {
    /// Problems the user fixes in configuration (project file, profile,
    /// prompts, provider settings, toolchain).
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Schema(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn harness_err(e: HarnessError) -> PipelineError {
    match e {
        HarnessError::RunnerMissing(_) | HarnessError::Command(_) => {
            PipelineError::Config(e.to_string())
        }
        other => PipelineError::Harness(other),
    }
}

/// Settings for opening a workspace. `None` keeps the session's stored
/// value (or the default for a new session).
#[derive(Default, Clone)]
pub struct PipelineOptions {
    pub provider: Option<ProviderConfig>,
    /// Append every provider exchange to this fixture.
    pub record_to: Option<PathBuf>,
    pub max_attempts: Option<u32>,
    pub prompts_dir: Option<PathBuf>,
    pub profile: Option<String>,
    pub limits: Option<HarnessLimits>,
    /// Use this provider instead of building one from the configuration.
    pub provider_instance: Option<Arc<dyn Provider>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    Advanced { from: Phase, to: Phase },
    AwaitingReview { pending: Vec<String> },
    Done,
    Aborted { report: AbortReport },
}

/// How far `run` drives the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    StructureApproved,
    TestsApproved,
    Done,
}

impl Target {
    fn reached(self, phase: &Phase) -> bool {
        match self {
            Target::StructureApproved => phase.ordinal() >= Phase::StructureApproved.ordinal(),
            Target::TestsApproved => phase.ordinal() >= Phase::TestsApproved.ordinal(),
            Target::Done => *phase == Phase::Done,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Reached { phase: Phase },
    AwaitingReview { pending: Vec<String> },
    Aborted { report: AbortReport },
    Done,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Reached { .. } | RunOutcome::Done => 0,
            RunOutcome::AwaitingReview { .. } => 2,
            RunOutcome::Aborted { .. } => 3,
        }
    }
}

/// Classes in generation order: packages in document order, then their
/// classes in document order.
pub fn generation_order(plan: &StructurePlan) -> Vec<ClassRef> {
    plan.class_refs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CrashPoint {
    commit: u32,
    after_save: bool,
}

fn parse_crash_point(value: &str) -> Option<CrashPoint> {
    let (n, after_save) = match value.split_once(':') {
        Some((n, "after")) => (n, true),
        Some(_) => return None,
        None => (value, false),
    };
    Some(CrashPoint {
        commit: n.trim().parse().ok()?,
        after_save,
    })
}

enum Reply {
    Code { code: String, seq: u64 },
    NoCode { seq: u64 },
    ProviderFailed(String),
}

struct RepairJob {
    kind: ArtifactKind,
    path: String,
    stage: &'static str,
    generate: TemplateId,
    repair: TemplateId,
    scope: TestScope,
    context: PromptContext,
    guidance: Vec<Guidance>,
}

enum LoopResult {
    Passed,
    Failed(AbortReport),
}

/// One session over one workspace. Holds the workspace lock for its
/// lifetime.
pub struct Pipeline {
    root: PathBuf,
    project: ProjectSpec,
    profile: TargetProfile,
    templates: TemplateRegistry,
    provider: Option<Box<dyn Provider>>,
    provider_instance: Option<Arc<dyn Provider>>,
    record_to: Option<PathBuf>,
    state: SessionState,
    transcript: Transcript,
    events: EventLog,
    workspace: Option<Workspace>,
    crash: Option<CrashPoint>,
    commits: u32,
    _lock: WorkspaceLock,
}

impl Pipeline {
    /// Opens (or starts) the session in `root`, which must hold a valid
    /// `project.yaml`.
    pub fn open(root: &Path, options: PipelineOptions) -> Result<Self, PipelineError> {
        let root = root.canonicalize().map_err(io_err(root))?;
        let onx = root.join(ONX_DIR);
        fs::create_dir_all(&onx).map_err(io_err(&onx))?;
        let lock = WorkspaceLock::acquire(&root)?;

        let project_path = root.join(PROJECT_FILE);
        let project_bytes = fs::read(&project_path).map_err(|_| {
            PipelineError::Config(format!(
                "{} not found; create one with `onx init`",
                project_path.display()
            ))
        })?;
        let project = parse_project_spec(&project_path)?;
        let project_hash = hash_bytes(&project_bytes);

        let existing = session_exists(&root);
        let mut state = if existing {
            load_session(&root)?
        } else {
            let now = Utc::now();
            SessionState {
                session_id: uuid::Uuid::new_v4().to_string(),
                created: now,
                updated: now,
                revision: 0,
                project_hash: project_hash.clone(),
                profile_id: options
                    .profile
                    .clone()
                    .unwrap_or_else(|| project.target_profile.clone()),
                prompts_dir: None,
                phase: Phase::Init,
                artifacts: Vec::new(),
                rounds: Default::default(),
                provider: ProviderConfig::openai(None),
                budgets: Budgets::default(),
                interventions: Vec::new(),
                aborts: 0,
                last_abort: None,
            }
        };
        let on_disk = if existing { Some(read_session(&root)?) } else { None };

        if state.project_hash != project_hash {
            if state.phase == Phase::Init || state.phase.is_aborted() {
                state.project_hash = project_hash;
            } else {
                return Err(PipelineError::Config(format!(
                    "project.yaml changed after generation started (phase {}); revert it, or \
                     remove .onx/ to start a new session",
                    state.phase
                )));
            }
        }
        if let Some(profile) = &options.profile {
            if *profile != state.profile_id {
                if state.phase != Phase::Init {
                    return Err(PipelineError::Config(format!(
                        "the session uses profile `{}`; the profile cannot change mid-session",
                        state.profile_id
                    )));
                }
                state.profile_id = profile.clone();
            }
        }
        if let Some(provider) = &options.provider {
            provider
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            state.provider = provider.clone();
        }
        if let Some(max) = options.max_attempts {
            if max == 0 {
                return Err(PipelineError::Config("max attempts must be at least 1".into()));
            }
            state.budgets.max_attempts = max;
        }
        if let Some(limits) = options.limits {
            state.budgets.limits = limits;
        }
        if let Some(dir) = &options.prompts_dir {
            state.prompts_dir = Some(dir.canonicalize().map_err(io_err(dir))?);
        }

        let profile = TargetProfile::resolve(&state.profile_id, &root)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let templates = match &state.prompts_dir {
            Some(dir) => load_templates(dir).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => TemplateRegistry::defaults(),
        };
        let transcript_path = root.join(TRANSCRIPT_FILE);
        let transcript = Transcript::open(&transcript_path).map_err(io_err(&transcript_path))?;
        let events_path = root.join(EVENTS_FILE);
        let events = EventLog::open(&events_path).map_err(io_err(&events_path))?;
        let crash = std::env::var(CRASH_ENV)
            .ok()
            .and_then(|v| parse_crash_point(&v));

        let mut pipeline = Self {
            root,
            project,
            profile,
            templates,
            provider: None,
            provider_instance: options.provider_instance,
            record_to: options.record_to,
            state,
            transcript,
            events,
            workspace: None,
            crash,
            commits: 0,
            _lock: lock,
        };
        if !existing {
            pipeline.save()?;
            let id = pipeline.state.session_id.clone();
            pipeline.event(EventKind::SessionCreated { session_id: id })?;
        } else if on_disk.as_ref() != Some(&pipeline.state) {
            pipeline.save()?;
        }
        Ok(pipeline)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn phase(&self) -> &Phase {
        &self.state.phase
    }

    pub fn project(&self) -> &ProjectSpec {
        &self.project
    }

    pub fn profile(&self) -> &TargetProfile {
        &self.profile
    }

    pub fn metrics(&self) -> MetricsReport {
        compute_metrics(&self.state, &self.root, &self.profile.line_comment_prefix)
    }

    /// Appends to the event feed (used by controllers for their own
    /// notifications).
    pub fn event(&mut self, kind: EventKind) -> Result<u64, PipelineError> {
        let path = self.events.path().to_path_buf();
        self.events.append(self.state.revision, kind).map_err(io_err(&path))
    }

    pub fn artifact_content(&self, id: &str) -> Result<String, PipelineError> {
        let artifact = self
            .state
            .artifact(id)
            .ok_or_else(|| PipelineError::UnknownArtifact(id.into()))?;
        let path = self.root.join(&artifact.path);
        fs::read_to_string(&path).map_err(io_err(&path))
    }

    fn save(&mut self) -> Result<(), PipelineError> {
        self.state.revision += 1;
        self.state.updated = Utc::now();
        save_checkpoint(&self.root, &self.state)?;
        Ok(())
    }

    fn maybe_crash(&self, after_save: bool) {
        if let Some(point) = self.crash {
            if point.commit == self.commits && point.after_save == after_save {
                warn!(commit = self.commits, after_save, "crash hook triggered");
                std::process::exit(CRASH_EXIT_CODE);
            }
        }
    }

    fn commit(&mut self) -> Result<(), PipelineError> {
        self.commits += 1;
        self.maybe_crash(false);
        self.save()?;
        self.maybe_crash(true);
        Ok(())
    }

    fn class_count(&self) -> usize {
        self.state
            .artifacts
            .iter()
            .filter(|a| matches!(a.kind, ArtifactKind::UnitTests { .. }))
            .count()
    }

    fn transition(&mut self, to: Phase) -> Result<StepOutcome, PipelineError> {
        let from = self.state.phase.clone();
        if !from.can_transition(&to, self.class_count()) {
            return Err(PipelineError::Contract(format!(
                "transition {from} -> {to} is not allowed"
            )));
        }
        self.state.phase = to.clone();
        self.commit()?;
        info!(%from, %to, "phase changed");
        self.event(EventKind::PhaseChanged {
            from: from.clone(),
            to: to.clone(),
        })?;
        Ok(StepOutcome::Advanced { from, to })
    }

    fn abort(&mut self, report: AbortReport) -> Result<StepOutcome, PipelineError> {
        let at = self.state.phase.clone();
        let to = Phase::Aborted {
            resume_at: Box::new(at.clone()),
        };
        if !at.can_transition(&to, self.class_count()) {
            return Err(PipelineError::Contract(format!("cannot abort from {at}")));
        }
        self.state.phase = to.clone();
        self.state.aborts += 1;
        self.state.last_abort = Some(report.clone());
        self.commit()?;
        warn!(phase = %at, artifact = ?report.artifact, "aborted: {}", report.message);
        self.event(EventKind::PhaseChanged { from: at, to })?;
        self.event(EventKind::Aborted {
            report: report.clone(),
        })?;
        Ok(StepOutcome::Aborted { report })
    }

    fn ensure_provider(&mut self) -> Result<(), PipelineError> {
        if self.provider.is_some() {
            return Ok(());
        }
        let built: Result<Box<dyn Provider>, ProviderError> = match &self.provider_instance {
            Some(instance) => {
                let inner: Box<dyn Provider> = Box::new(instance.clone());
                match &self.record_to {
                    Some(path) => RecordingProvider::new(inner, path)
                        .map(|p| Box::new(p) as Box<dyn Provider>),
                    None => Ok(inner),
                }
            }
            None => build_provider(&self.state.provider, self.record_to.as_deref()),
        };
        self.provider = Some(built.map_err(|e| PipelineError::Config(e.to_string()))?);
        Ok(())
    }

    fn call(&mut self, key: CallKey, ctx: &PromptContext) -> Result<Reply, PipelineError> {
        let prompt = self
            .templates
            .render(key.template, ctx)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let request = ChatRequest {
            system: context::system_prompt(&self.profile),
            user: prompt,
        };
        self.ensure_provider()?;
        let provider = self.provider.as_deref().expect("provider built");
        let completion = match provider.complete(&key, &request) {
            Ok(c) => c,
            Err(
                e @ (ProviderError::Config(_)
                | ProviderError::MissingKey(_)
                | ProviderError::Fixture { .. }),
            ) => return Err(PipelineError::Config(e.to_string())),
            Err(e) => {
                warn!(%key, error = %e, "provider call failed");
                return Ok(Reply::ProviderFailed(e.to_string()));
            }
        };
        let record = TranscriptRecord {
            seq: 0,
            timestamp: Utc::now(),
            phase: key.phase.clone(),
            artifact: key.artifact.clone(),
            round: key.round,
            attempt: key.attempt,
            template: key.template,
            system: request.system,
            prompt: request.user,
            response: completion.text.clone(),
            provider: provider.kind().to_string(),
            model: provider.model().to_string(),
            latency_ms: completion.latency_ms,
            transport_retries: completion.transport_retries,
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
        };
        let path = self.transcript.path().to_path_buf();
        let seq = self.transcript.append(record).map_err(io_err(&path))?;
        self.event(EventKind::ProviderCall {
            seq,
            artifact: key.artifact,
            round: key.round,
            attempt: key.attempt,
            template: key.template,
        })?;
        Ok(match extract_code(&completion.text) {
            Ok(code) => Reply::Code { code, seq },
            Err(_) => Reply::NoCode { seq },
        })
    }

    fn next_round(&self, id: &str) -> u32 {
        self.state.rounds.get(id).copied().unwrap_or(0) + 1
    }

    fn upsert_artifact(&mut self, kind: ArtifactKind, path: &str) -> &mut Artifact {
        let id = kind.id();
        match self.state.artifacts.iter().position(|a| a.id == id) {
            Some(i) => &mut self.state.artifacts[i],
            None => {
                self.state.artifacts.push(Artifact::new(kind, path.to_string()));
                self.state.artifacts.last_mut().expect("just pushed")
            }
        }
    }

    fn write_file(&self, rel: &str, content: &str) -> Result<String, PipelineError> {
        let path = self.root.join(rel);
        atomic_write(&path, content.as_bytes()).map_err(io_err(&path))?;
        Ok(hash_bytes(content.as_bytes()))
    }

    fn read_file(&self, rel: &str) -> Result<String, PipelineError> {
        let path = self.root.join(rel);
        fs::read_to_string(&path).map_err(io_err(&path))
    }

    fn validate_structure(&self, text: &str) -> Result<(StructurePlan, PathMap), String> {
        let plan = StructurePlan::from_yaml_str(text, &self.profile.identifier_rule())
            .map_err(|e| e.to_string())?;
        let paths = resolve_paths(&plan, &self.profile).map_err(|e| e.to_string())?;
        Ok((plan, paths))
    }

    fn approved_plan(&self) -> Result<(StructurePlan, PathMap, String), PipelineError> {
        let text = self.read_file(STRUCTURE_FILE)?;
        let (plan, paths) = self
            .validate_structure(&text)
            .map_err(|e| PipelineError::Config(format!("{STRUCTURE_FILE}: {e}")))?;
        Ok((plan, paths, text))
    }

    /// Approved tests must be exactly as approved before any code is
    /// generated against them.
    fn verify_tests(&self) -> Result<(), PipelineError> {
        for a in &self.state.artifacts {
            if a.kind.is_test() && a.review_status.is_approved() {
                let path = self.root.join(&a.path);
                let current = hash_file(&path).map_err(io_err(&path))?;
                if current != a.hash {
                    return Err(StoreError::ImmutabilityBreach {
                        path: a.path.clone(),
                    }
                    .into());
                }
            }
        }
        Ok(())
    }

    /// `Ok(Err(output))` when dependency installation or environment
    /// creation failed; that aborts the session without consuming
    /// attempts.
    fn ensure_workspace(&mut self) -> Result<Result<(), String>, PipelineError> {
        if self.workspace.is_some() {
            return Ok(Ok(()));
        }
        match prepare_workspace(
            &self.project,
            &self.profile,
            &self.root,
            self.state.budgets.limits,
        ) {
            Ok(ws) => {
                self.workspace = Some(ws);
                Ok(Ok(()))
            }
            Err(e @ (HarnessError::InstallFailed { .. } | HarnessError::EnvironmentFailed { .. })) => {
                Ok(Err(e.to_string()))
            }
            Err(e) => Err(harness_err(e)),
        }
    }

    fn workspace_abort(&mut self, output: String) -> Result<StepOutcome, PipelineError> {
        self.abort(AbortReport {
            phase: self.state.phase.clone(),
            artifact: None,
            attempts: 0,
            message: "workspace preparation failed (dependency install or environment creation)"
                .into(),
            failure_excerpt: crate::prompt::truncate_tail(
                &output,
                self.state.budgets.failure_budget_chars,
            ),
            guidance: vec![Guidance::EditProjectConfig],
        })
    }

    /// Executes one stage or one checkpoint check.
    pub fn advance(&mut self) -> Result<StepOutcome, PipelineError> {
        match self.state.phase.clone() {
            Phase::Init => self.plan_structure(),
            Phase::StructureDraft => {
                self.checkpoint(|k| *k == ArtifactKind::Structure, Phase::StructureApproved)
            }
            Phase::StructureApproved => self.generate_tests(),
            Phase::TestsDraft => self.checkpoint(ArtifactKind::is_test, Phase::TestsApproved),
            Phase::TestsApproved => self.start_classes(),
            Phase::ClassGeneration(i) => self.class_generation(i),
            Phase::ClassesDone => self.unit_gate(),
            Phase::MainGeneration => self.main_generation(),
            Phase::Done => Ok(StepOutcome::Done),
            Phase::Aborted { resume_at } => Ok(StepOutcome::Aborted {
                report: self.state.last_abort.clone().unwrap_or_else(|| AbortReport {
                    phase: *resume_at,
                    artifact: None,
                    attempts: 0,
                    message: "session is aborted".into(),
                    failure_excerpt: String::new(),
                    guidance: vec![Guidance::EditTests],
                }),
            }),
        }
    }

    /// Advances until `target`, a checkpoint (unless `auto_approve`), an
    /// abort or completion.
    pub fn run(&mut self, target: Target, auto_approve: bool) -> Result<RunOutcome, PipelineError> {
        loop {
            let phase = self.state.phase.clone();
            if phase == Phase::Done {
                return Ok(RunOutcome::Done);
            }
            if !phase.is_aborted() && target.reached(&phase) {
                return Ok(RunOutcome::Reached { phase });
            }
            match self.advance()? {
                StepOutcome::Advanced { .. } => {}
                StepOutcome::AwaitingReview { pending } => {
                    if auto_approve {
                        self.approve_all()?;
                    } else {
                        return Ok(RunOutcome::AwaitingReview { pending });
                    }
                }
                StepOutcome::Done => return Ok(RunOutcome::Done),
                StepOutcome::Aborted { report } => return Ok(RunOutcome::Aborted { report }),
            }
        }
    }

    fn checkpoint(
        &mut self,
        filter: impl Fn(&ArtifactKind) -> bool,
        to: Phase,
    ) -> Result<StepOutcome, PipelineError> {
        let pending: Vec<String> = self
            .state
            .artifacts
            .iter()
            .filter(|a| filter(&a.kind) && a.review_status.is_pending())
            .map(|a| a.id.clone())
            .collect();
        if pending.is_empty() {
            self.transition(to)
        } else {
            Ok(StepOutcome::AwaitingReview { pending })
        }
    }

    /// Artifacts awaiting review at the open checkpoint. Never includes
    /// production code.
    pub fn pending_reviews(&self) -> Vec<&Artifact> {
        let open: fn(&ArtifactKind) -> bool = match self.state.phase {
            Phase::StructureDraft => |k| *k == ArtifactKind::Structure,
            Phase::TestsDraft => ArtifactKind::is_test,
            _ => return Vec::new(),
        };
        self.state
            .pending_reviews()
            .into_iter()
            .filter(|a| open(&a.kind))
            .collect()
    }

    /// Marks a pending structure or test artifact approved. A content
    /// change since generation makes it `approved_modified` and counts as
    /// one intervention; an edited structure is re-validated first.
    pub fn approve(&mut self, id: &str) -> Result<bool, PipelineError> {
        let artifact = self
            .state
            .artifact(id)
            .ok_or_else(|| PipelineError::UnknownArtifact(id.into()))?
            .clone();
        if artifact.kind.is_production() {
            return Err(PipelineError::Contract(format!(
                "`{id}` is production code; it is verified by tests, never reviewed"
            )));
        }
        if !artifact.review_status.is_pending() || !self.pending_reviews().iter().any(|a| a.id == id) {
            return Err(PipelineError::NotPending(id.into()));
        }
        let text = self.read_file(&artifact.path)?;
        let current = hash_bytes(text.as_bytes());
        let modified = Some(&current) != artifact.generated_hash.as_ref();
        if modified && artifact.kind == ArtifactKind::Structure {
            self.validate_structure(&text)
                .map_err(|e| PipelineError::Config(format!("{STRUCTURE_FILE}: {e}")))?;
        }
        let phase = self.state.phase.clone();
        let a = self.state.artifact_mut(id).expect("checked above");
        a.hash = Some(current);
        a.review_status = if modified {
            ReviewStatus::ApprovedModified
        } else {
            ReviewStatus::ApprovedUnmodified
        };
        if modified {
            self.state.interventions.push(Intervention {
                artifact: id.into(),
                kind: InterventionKind::Checkpoint,
                at: phase,
            });
        }
        self.commit()?;
        self.event(EventKind::Approved {
            artifact: id.into(),
            modified,
        })?;
        if modified {
            self.event(EventKind::InterventionRecorded {
                artifact: id.into(),
            })?;
        }
        Ok(modified)
    }

    /// Approves everything pending at the open checkpoint; returns the
    /// approved ids.
    pub fn approve_all(&mut self) -> Result<Vec<String>, PipelineError> {
        let ids: Vec<String> = self.pending_reviews().iter().map(|a| a.id.clone()).collect();
        for id in &ids {
            self.approve(id)?;
        }
        Ok(ids)
    }

    /// Replaces the content of a pending structure or test artifact.
    pub fn replace_artifact(&mut self, id: &str, content: &str) -> Result<(), PipelineError> {
        let artifact = self
            .state
            .artifact(id)
            .ok_or_else(|| PipelineError::UnknownArtifact(id.into()))?
            .clone();
        if artifact.kind.is_production() {
            return Err(PipelineError::Contract(format!(
                "`{id}` is production code and cannot be edited"
            )));
        }
        if !artifact.review_status.is_pending() {
            return Err(PipelineError::Contract(format!(
                "`{id}` is approved and therefore immutable"
            )));
        }
        let hash = self.write_file(&artifact.path, content)?;
        let a = self.state.artifact_mut(id).expect("checked above");
        a.review_status = if Some(&hash) == a.generated_hash.as_ref() {
            ReviewStatus::Pending
        } else {
            ReviewStatus::PendingModified
        };
        a.hash = Some(hash);
        self.commit()?;
        self.event(EventKind::ArtifactEdited {
            artifact: id.into(),
        })?;
        Ok(())
    }

    /// Leaves an aborted state: picks up human edits of test files (each a
    /// post-abort intervention, starting a new round for the failed
    /// artifact) and returns to the stage that aborted. `None` when the
    /// session is not aborted; plain re-invocation then continues where an
    /// interrupted process stopped.
    pub fn resume(&mut self) -> Result<Option<Phase>, PipelineError> {
        let Phase::Aborted { resume_at } = self.state.phase.clone() else {
            return Ok(None);
        };
        let at = *resume_at;
        let mut edited = Vec::new();
        for a in &self.state.artifacts {
            if !a.kind.is_reviewable() || a.hash.is_none() {
                continue;
            }
            let path = self.root.join(&a.path);
            let current = hash_file(&path).map_err(io_err(&path))?.ok_or_else(|| {
                StoreError::MissingArtifact {
                    path: a.path.clone(),
                }
            })?;
            if Some(&current) != a.hash.as_ref() {
                edited.push((a.id.clone(), a.kind.clone(), current));
            }
        }
        for (id, kind, current) in &edited {
            if *kind == ArtifactKind::Structure {
                if at.ordinal() > Phase::StructureApproved.ordinal() {
                    return Err(PipelineError::Contract(format!(
                        "{STRUCTURE_FILE} was edited after the tests were generated from it; \
                         revert the edit, or remove .onx/ and start a new session"
                    )));
                }
                let text = self.read_file(STRUCTURE_FILE)?;
                self.validate_structure(&text)
                    .map_err(|e| PipelineError::Config(format!("{STRUCTURE_FILE}: {e}")))?;
            }
            let a = self.state.artifact_mut(id).expect("listed above");
            a.hash = Some(current.clone());
            if a.review_status.is_pending() {
                a.review_status = ReviewStatus::PendingModified;
                continue;
            }
            a.review_status = ReviewStatus::ApprovedModified;
            self.state.interventions.push(Intervention {
                artifact: id.clone(),
                kind: InterventionKind::PostAbort,
                at: at.clone(),
            });
        }
        self.state.last_abort = None;
        self.transition(at.clone())?;
        for (id, kind, _) in edited {
            if kind.is_reviewable() && self.state.artifact(&id).is_some_and(|a| a.review_status.is_approved()) {
                self.event(EventKind::InterventionRecorded { artifact: id })?;
            }
        }
        self.event(EventKind::Resumed { phase: at.clone() })?;
        Ok(Some(at))
    }

    fn plan_structure(&mut self) -> Result<StepOutcome, PipelineError> {
        let id = ArtifactKind::Structure.id();
        let round = self.next_round(&id);
        let mut feedback = String::new();
        let mut last_error = String::new();
        let mut attempts = Vec::new();
        for attempt in 1..=2 {
            let ctx = context::base(&self.project, &self.profile).with("feedback", feedback.clone());
            let key = CallKey {
                phase: "structure".into(),
                artifact: id.clone(),
                round,
                attempt,
                template: TemplateId::StructureGen,
            };
            let (seq, problem) = match self.call(key, &ctx)? {
                Reply::ProviderFailed(msg) => {
                    self.state.rounds.insert(id.clone(), round);
                    return self.abort(AbortReport {
                        phase: Phase::Init,
                        artifact: Some(id),
                        attempts: attempt - 1,
                        message: "provider failure while planning the structure".into(),
                        failure_excerpt: msg,
                        guidance: vec![Guidance::CheckProvider, Guidance::EditProjectConfig],
                    });
                }
                Reply::NoCode { seq } => (seq, "the response contained no fenced YAML block".to_string()),
                Reply::Code { code, seq } => match self.validate_structure(&code) {
                    Ok((plan, _)) => {
                        let text = serialize_structure(&plan);
                        let hash = self.write_file(STRUCTURE_FILE, &text)?;
                        attempts.push(GenerationAttempt {
                            round,
                            attempt,
                            transcript_seq: seq,
                            code_hash: Some(hash.clone()),
                            test_run: None,
                            verdict: Verdict::Pass,
                            summary: "structure accepted by schema".into(),
                        });
                        self.state.rounds.insert(id.clone(), round);
                        let a = self.upsert_artifact(ArtifactKind::Structure, STRUCTURE_FILE);
                        a.hash = Some(hash.clone());
                        a.generated_hash = Some(hash);
                        a.review_status = ReviewStatus::Pending;
                        a.attempts.extend(attempts);
                        let outcome = self.transition(Phase::StructureDraft)?;
                        self.event(EventKind::CheckpointOpened {
                            artifact: id,
                            path: STRUCTURE_FILE.into(),
                        })?;
                        return Ok(outcome);
                    }
                    Err(e) => (seq, e),
                },
            };
            attempts.push(GenerationAttempt {
                round,
                attempt,
                transcript_seq: seq,
                code_hash: None,
                test_run: None,
                verdict: Verdict::Fail,
                summary: problem.clone(),
            });
            feedback = format!(
                "\nYour previous answer was rejected:\n{problem}\nAnswer again with the complete, corrected YAML document.\n"
            );
            last_error = problem;
        }
        self.state.rounds.insert(id.clone(), round);
        self.abort(AbortReport {
            phase: Phase::Init,
            artifact: Some(id),
            attempts: 2,
            message: "the generated structure plan was rejected twice".into(),
            failure_excerpt: last_error,
            guidance: vec![Guidance::EditProjectConfig, Guidance::CheckProvider],
        })
    }

    fn generate_tests(&mut self) -> Result<StepOutcome, PipelineError> {
        let (plan, paths, structure) = self.approved_plan()?;
        let mut jobs = vec![(
            ArtifactKind::AcceptanceTests,
            paths.acceptance_tests.clone(),
            TemplateId::AcceptanceTestsGen,
        )];
        for (class, cp) in &paths.classes {
            jobs.push((
                ArtifactKind::UnitTests {
                    class: class.clone(),
                },
                cp.unit_test.clone(),
                TemplateId::UnitTestsGen,
            ));
        }
        let mut opened = Vec::new();
        for (kind, path, template) in jobs {
            let id = kind.id();
            if self.state.artifact(&id).is_some() {
                continue;
            }
            let mut ctx = context::base(&self.project, &self.profile).with("structure", structure.clone());
            match &kind {
                ArtifactKind::UnitTests { class } => {
                    let cp = paths.get(class).expect("resolved above");
                    let class_plan = plan.class(class).expect("resolved above");
                    context::class_vars(&mut ctx, class, class_plan, &cp.source, &cp.unit_test);
                }
                _ => {
                    ctx.set("main_path", paths.main_entry.clone());
                    ctx.set("acceptance_test_path", paths.acceptance_tests.clone());
                }
            }
            let round = self.next_round(&id);
            let key = CallKey {
                phase: "tests".into(),
                artifact: id.clone(),
                round,
                attempt: 1,
                template,
            };
            let reply = self.call(key, &ctx)?;
            self.state.rounds.insert(id.clone(), round);
            let (code, seq) = match reply {
                Reply::Code { code, seq } => (code, seq),
                Reply::NoCode { .. } | Reply::ProviderFailed(_) => {
                    let (message, excerpt, guidance) = match reply {
                        Reply::ProviderFailed(msg) => (
                            format!("provider failure while generating {path}"),
                            msg,
                            vec![Guidance::CheckProvider, Guidance::EditStructure],
                        ),
                        _ => (
                            format!("no code block in the response for {path}"),
                            String::new(),
                            vec![Guidance::EditStructure, Guidance::EditProjectConfig],
                        ),
                    };
                    return self.abort(AbortReport {
                        phase: Phase::StructureApproved,
                        artifact: Some(id),
                        attempts: 1,
                        message,
                        failure_excerpt: excerpt,
                        guidance,
                    });
                }
            };
            let hash = self.write_file(&path, &format!("{code}\n"))?;
            let a = self.upsert_artifact(kind, &path);
            a.hash = Some(hash.clone());
            a.generated_hash = Some(hash.clone());
            a.review_status = ReviewStatus::Pending;
            a.attempts.push(GenerationAttempt {
                round,
                attempt: 1,
                transcript_seq: seq,
                code_hash: Some(hash),
                test_run: None,
                verdict: Verdict::Pass,
                summary: "test file written".into(),
            });
            opened.push((id, path));
        }
        let outcome = self.transition(Phase::TestsDraft)?;
        for (artifact, path) in opened {
            self.event(EventKind::CheckpointOpened { artifact, path })?;
        }
        Ok(outcome)
    }

    fn start_classes(&mut self) -> Result<StepOutcome, PipelineError> {
        self.verify_tests()?;
        if let Err(output) = self.ensure_workspace()? {
            return self.workspace_abort(output);
        }
        if self.class_count() == 0 {
            self.transition(Phase::ClassesDone)
        } else {
            self.transition(Phase::ClassGeneration(0))
        }
    }

    fn class_generation(&mut self, index: usize) -> Result<StepOutcome, PipelineError> {
        self.verify_tests()?;
        let (plan, paths, structure) = self.approved_plan()?;
        let (class, cp) = paths.classes.get(index).cloned().ok_or_else(|| {
            PipelineError::Contract(format!("no class at generation index {index}"))
        })?;
        let unit_id = ArtifactKind::UnitTests {
            class: class.clone(),
        }
        .id();
        if !self
            .state
            .artifact(&unit_id)
            .is_some_and(|a| a.review_status.is_approved())
        {
            return Err(PipelineError::Contract(format!(
                "unit tests for {class} are not approved"
            )));
        }
        if let Err(output) = self.ensure_workspace()? {
            return self.workspace_abort(output);
        }
        let class_plan = plan.class(&class).expect("resolved from plan");
        let mut ctx = context::base(&self.project, &self.profile).with("structure", structure);
        context::class_vars(&mut ctx, &class, class_plan, &cp.source, &cp.unit_test);
        ctx.set("unit_tests", self.read_file(&cp.unit_test)?);
        ctx.set(
            "context_sources",
            context::file_listing(&self.root, context::class_sources_before(&paths, index)),
        );
        let job = RepairJob {
            kind: ArtifactKind::ClassCode {
                class: class.clone(),
            },
            path: cp.source.clone(),
            stage: "class_generation",
            generate: TemplateId::ClassCodeGen,
            repair: TemplateId::ClassCodeRepair,
            scope: TestScope::Unit {
                class,
                file: cp.unit_test.clone(),
            },
            context: ctx,
            guidance: vec![
                Guidance::EditTests,
                Guidance::EditStructure,
                Guidance::EditProjectConfig,
            ],
        };
        match self.repair_loop(job)? {
            LoopResult::Passed if index + 1 < paths.classes.len() => {
                self.transition(Phase::ClassGeneration(index + 1))
            }
            LoopResult::Passed => self.transition(Phase::ClassesDone),
            LoopResult::Failed(report) => self.abort(report),
        }
    }

    fn unit_gate(&mut self) -> Result<StepOutcome, PipelineError> {
        self.verify_tests()?;
        let (_, paths, _) = self.approved_plan()?;
        let files = paths.unit_tests();
        if files.is_empty() {
            return self.transition(Phase::MainGeneration);
        }
        if let Err(output) = self.ensure_workspace()? {
            return self.workspace_abort(output);
        }
        let ws = self.workspace.as_ref().expect("prepared");
        let report = ws
            .run_tests(&TestScope::UnitAll { files })
            .map_err(harness_err)?;
        let passed = report.is_green();
        self.event(EventKind::GateResult {
            passed,
            summary: report.summary(),
        })?;
        if passed {
            self.transition(Phase::MainGeneration)
        } else {
            self.abort(AbortReport {
                phase: Phase::ClassesDone,
                artifact: None,
                attempts: 0,
                message: format!(
                    "the full unit suite failed after every class passed its own tests ({})",
                    report.summary()
                ),
                failure_excerpt: truncate_failure(&report, self.state.budgets.failure_budget_chars),
                guidance: vec![Guidance::EditTests, Guidance::EditStructure],
            })
        }
    }

    fn main_generation(&mut self) -> Result<StepOutcome, PipelineError> {
        self.verify_tests()?;
        let (_, paths, structure) = self.approved_plan()?;
        if let Err(output) = self.ensure_workspace()? {
            return self.workspace_abort(output);
        }
        let mut ctx = context::base(&self.project, &self.profile).with("structure", structure);
        ctx.set("main_path", paths.main_entry.clone());
        ctx.set(
            "class_sources",
            context::file_listing(
                &self.root,
                context::class_sources_before(&paths, paths.classes.len()),
            ),
        );
        ctx.set("acceptance_tests_code", self.read_file(&paths.acceptance_tests)?);
        let job = RepairJob {
            kind: ArtifactKind::MainCode,
            path: paths.main_entry.clone(),
            stage: "main_generation",
            generate: TemplateId::MainGen,
            repair: TemplateId::MainRepair,
            scope: TestScope::Acceptance {
                file: paths.acceptance_tests.clone(),
            },
            context: ctx,
            guidance: vec![Guidance::EditTests, Guidance::EditProjectConfig],
        };
        match self.repair_loop(job)? {
            LoopResult::Passed => {
                let outcome = self.transition(Phase::Done)?;
                let metrics = self.metrics();
                let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
                self.write_file(METRICS_FILE, &json)?;
                self.event(EventKind::Completed)?;
                Ok(outcome)
            }
            LoopResult::Failed(report) => self.abort(report),
        }
    }

    /// Bounded generate, test, re-prompt cycle for one production file.
    /// Attempt k > 1 uses the repair template with the previous code and
    /// the truncated failure output of attempt k - 1.
    fn repair_loop(&mut self, job: RepairJob) -> Result<LoopResult, PipelineError> {
        let id = job.kind.id();
        let round = self.next_round(&id);
        let max = self.state.budgets.max_attempts;
        let budget = self.state.budgets.failure_budget_chars;
        self.upsert_artifact(job.kind.clone(), &job.path);
        let mut prior_code = String::new();
        let mut failure = String::new();
        for attempt in 1..=max {
            let mut ctx = job.context.clone();
            let template = if attempt == 1 {
                job.generate
            } else {
                ctx.set("attempt", attempt.to_string());
                ctx.set("prior_code", prior_code.clone());
                ctx.set("failure", failure.clone());
                job.repair
            };
            let key = CallKey {
                phase: job.stage.into(),
                artifact: id.clone(),
                round,
                attempt,
                template,
            };
            let (code, seq) = match self.call(key, &ctx)? {
                Reply::ProviderFailed(msg) => {
                    self.state.rounds.insert(id.clone(), round);
                    return Ok(LoopResult::Failed(AbortReport {
                        phase: self.state.phase.clone(),
                        artifact: Some(id),
                        attempts: attempt - 1,
                        message: "provider failure".into(),
                        failure_excerpt: msg,
                        guidance: vec![Guidance::CheckProvider],
                    }));
                }
                Reply::NoCode { seq } => {
                    failure = "The response contained no fenced code block.".into();
                    if prior_code.is_empty() {
                        prior_code = "(no code was extracted from the previous response)".into();
                    }
                    self.record_attempt(&id, GenerationAttempt {
                        round,
                        attempt,
                        transcript_seq: seq,
                        code_hash: None,
                        test_run: None,
                        verdict: Verdict::ExtractionFailure,
                        summary: "no code block in response".into(),
                    })?;
                    continue;
                }
                Reply::Code { code, seq } => (code, seq),
            };
            let hash = self.write_file(&job.path, &format!("{code}\n"))?;
            let ws = self.workspace.as_ref().expect("prepared before loops");
            let report = ws.run_tests(&job.scope).map_err(harness_err)?;
            let verdict = if report.is_green() {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            self.record_attempt(&id, GenerationAttempt {
                round,
                attempt,
                transcript_seq: seq,
                code_hash: Some(hash.clone()),
                test_run: report.run_id.clone(),
                verdict,
                summary: report.summary(),
            })?;
            if verdict == Verdict::Pass {
                self.state.rounds.insert(id.clone(), round);
                let a = self.state.artifact_mut(&id).expect("registered above");
                a.hash = Some(hash.clone());
                a.generated_hash = Some(hash);
                return Ok(LoopResult::Passed);
            }
            prior_code = code;
            failure = truncate_failure(&report, budget);
        }
        self.state.rounds.insert(id.clone(), round);
        Ok(LoopResult::Failed(AbortReport {
            phase: self.state.phase.clone(),
            artifact: Some(id.clone()),
            attempts: max,
            message: format!("{id} still failed its tests after {max} attempts"),
            failure_excerpt: failure,
            guidance: job.guidance,
        }))
    }

    fn record_attempt(&mut self, id: &str, attempt: GenerationAttempt) -> Result<(), PipelineError> {
        let event = EventKind::AttemptResult {
            artifact: id.into(),
            round: attempt.round,
            attempt: attempt.attempt,
            verdict: attempt.verdict,
            summary: attempt.summary.clone(),
        };
        self.state
            .artifact_mut(id)
            .expect("registered before attempts")
            .attempts
            .push(attempt);
        self.event(event)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_point_parsing() {
        assert_eq!(
            parse_crash_point("3"),
            Some(CrashPoint {
                commit: 3,
                after_save: false
            })
        );
        assert_eq!(
            parse_crash_point("4:after"),
            Some(CrashPoint {
                commit: 4,
                after_save: true
            })
        );
        assert_eq!(parse_crash_point("x"), None);
        assert_eq!(parse_crash_point("2:during"), None);
    }

    #[test]
    fn targets() {
        assert!(!Target::StructureApproved.reached(&Phase::StructureDraft));
        assert!(Target::StructureApproved.reached(&Phase::TestsDraft));
        assert!(Target::TestsApproved.reached(&Phase::ClassGeneration(0)));
        assert!(!Target::Done.reached(&Phase::MainGeneration));
    }
}
