//! Isolated workspace preparation and test/program execution for a target
//! profile.
//!
//! Everything the harness writes lives under the workspace root: installed
//! dependencies in `.onx/deps` (or a profile-created environment in
//! `.onx/env`), temporary files in `.onx/tmp`, and the captured output and
//! report of every run in `.onx/runs/`.

mod junit;
mod process;
mod report;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

pub use junit::parse_junit;
pub use process::{run_captured, Captured};
pub use report::{CaseOutcome, ScopeKind, TestCase, TestReport, TestScope};

use crate::spec::{CommandVars, ProjectSpec, TargetProfile};

pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_INSTALL_TIMEOUT: Duration = Duration::from_secs(300);

const MARKER: &str = ".onx/workspace.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessLimits {
    pub test_timeout_secs: u64,
    pub install_timeout_secs: u64,
}

impl Default for HarnessLimits {
    fn default() -> Self {
        Self {
            test_timeout_secs: DEFAULT_TEST_TIMEOUT.as_secs(),
            install_timeout_secs: DEFAULT_INSTALL_TIMEOUT.as_secs(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("workspace I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("runner `{0}` not found; is the profile's toolchain installed?")]
    RunnerMissing(String),
    #[error("environment creation failed (exit {exit_code:?}):\n{output}")]
    EnvironmentFailed { exit_code: Option<i32>, output: String },
    #[error("dependency install failed (exit {exit_code:?}):\n{output}")]
    InstallFailed { exit_code: Option<i32>, output: String },
    #[error("test file {0} does not exist")]
    MissingTestFile(String),
    #[error("program entry {0} does not exist")]
    MissingEntry(String),
    #[error("program timed out after {0} s")]
    ProgramTimeout(u64),
    #[error("profile command: {0}")]
    Command(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PreparedMarker {
    profile: String,
    dependencies: Vec<String>,
}

/// Exit status and output of one program invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    profile: TargetProfile,
    prepared: bool,
    dependencies: Vec<String>,
    limits: HarnessLimits,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn profile(&self) -> &TargetProfile {
        &self.profile
    }

    pub fn is_prepared(&self) -> bool {
        self.prepared
    }

    pub fn installed_dependencies(&self) -> &[String] {
        &self.dependencies
    }

    pub fn deps_dir(&self) -> PathBuf {
        self.root.join(".onx/deps")
    }

    pub fn env_dir(&self) -> PathBuf {
        self.root.join(".onx/env")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join(".onx/runs")
    }

    fn vars(&self) -> CommandVars {
        CommandVars::new()
            .set("workspace", self.root.display().to_string())
            .set("deps_dir", self.deps_dir().display().to_string())
            .set("env_dir", self.env_dir().display().to_string())
    }

    fn env(&self) -> Result<Vec<(String, String)>, HarnessError> {
        let vars = self.vars();
        self.profile
            .env
            .iter()
            .map(|(k, v)| {
                vars.render_one(v)
                    .map(|v| (k.clone(), v))
                    .map_err(HarnessError::Command)
            })
            .collect()
    }

    fn exec(
        &self,
        argv: &[String],
        stdin: Option<&str>,
        timeout: Duration,
    ) -> Result<Captured, HarnessError> {
        let env = self.env()?;
        debug!(?argv, "exec");
        run_captured(argv, &self.root, &env, stdin, timeout).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                HarnessError::RunnerMissing(argv.first().cloned().unwrap_or_default())
            } else {
                HarnessError::Io {
                    path: self.root.clone(),
                    source: e,
                }
            }
        })
    }

    fn next_run_dir(&self, label: &str) -> Result<PathBuf, HarnessError> {
        let runs = self.runs_dir();
        fs::create_dir_all(&runs).map_err(io_err(&runs))?;
        let count = fs::read_dir(&runs).map_err(io_err(&runs))?.count();
        let dir = runs.join(format!("{:04}-{label}", count + 1));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    /// Runs the profile's test command over the scope's files.
    pub fn run_tests(&self, scope: &TestScope) -> Result<TestReport, HarnessError> {
        let files = scope.files();
        for f in &files {
            if !self.root.join(f).is_file() {
                return Err(HarnessError::MissingTestFile(f.clone()));
            }
        }
        let run_dir = self.next_run_dir(&scope.label())?;
        let report_path = run_dir.join("report.xml");
        let argv = self
            .vars()
            .set("report", report_path.display().to_string())
            .set_list("tests", files)
            .render(&self.profile.test_command)
            .map_err(HarnessError::Command)?;
        let timeout = Duration::from_secs(self.limits.test_timeout_secs);
        let captured = self.exec(&argv, None, timeout)?;
        let mut report = interpret(
            scope.kind(),
            &captured,
            &report_path,
            self.profile.has_report_flag(),
            timeout,
        );
        report.run_id = run_dir.file_name().map(|n| n.to_string_lossy().into_owned());
        fs::write(run_dir.join("output.txt"), &report.raw_output).map_err(io_err(&run_dir))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(run_dir.join("report.json"), json).map_err(io_err(&run_dir))?;
        info!(scope = %scope.label(), summary = %report.summary(), "test run");
        Ok(report)
    }

    /// Runs the generated program's entry file with `args`.
    pub fn run_program(
        &self,
        args: &[String],
        stdin: Option<&str>,
        timeout: Duration,
    ) -> Result<ProgramOutput, HarnessError> {
        let entry = self.profile.render_path(&self.profile.main_entry_path, &[]);
        let entry_path = self.root.join(&entry);
        if !entry_path.is_file() {
            return Err(HarnessError::MissingEntry(entry));
        }
        let mut argv = self
            .vars()
            .set("entry", entry_path.display().to_string())
            .render(&self.profile.run_command)
            .map_err(HarnessError::Command)?;
        argv.extend(args.iter().cloned());
        let captured = self.exec(&argv, stdin, timeout)?;
        if captured.timed_out {
            return Err(HarnessError::ProgramTimeout(timeout.as_secs()));
        }
        Ok(ProgramOutput {
            exit_code: captured.exit_code,
            stdout: captured.stdout,
            stderr: captured.stderr,
        })
    }
}

fn interpret(
    scope: ScopeKind,
    captured: &Captured,
    report_path: &Path,
    has_report_flag: bool,
    timeout: Duration,
) -> TestReport {
    let raw = captured.combined();
    let secs = captured.duration.as_secs_f64();
    if captured.timed_out {
        let raw = format!("{raw}\n[test run timed out after {} s]", timeout.as_secs());
        return TestReport::infra(scope, raw, secs, None);
    }
    let parsed = if has_report_flag {
        fs::read_to_string(report_path)
            .ok()
            .and_then(|xml| parse_junit(&xml).ok())
    } else {
        None
    };
    match (parsed, captured.exit_code) {
        (Some(cases), _) if cases.is_empty() => {
            TestReport::infra(scope, format!("no tests collected\n{raw}"), secs, captured.exit_code)
        }
        (Some(cases), Some(0 | 1)) => {
            TestReport::from_cases(scope, cases, raw, secs, captured.exit_code)
        }
        (Some(_), code) => TestReport::infra(scope, raw, secs, code),
        // no machine-readable report: the exit code is all there is
        (None, Some(0)) => TestReport::from_cases(
            scope,
            vec![TestCase {
                id: "<suite>".into(),
                outcome: CaseOutcome::Passed,
                message: None,
            }],
            raw,
            secs,
            Some(0),
        ),
        (None, code) => TestReport::infra(scope, raw, secs, code),
    }
}

/// Creates the workspace layout, the profile's environment and installs
/// the project's dependencies. Idempotent: a workspace already prepared for
/// the same profile and dependency set is returned as is.
pub fn prepare_workspace(
    spec: &ProjectSpec,
    profile: &TargetProfile,
    root: &Path,
    limits: HarnessLimits,
) -> Result<Workspace, HarnessError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let root = root.canonicalize().map_err(io_err(root))?;
    let mut ws = Workspace {
        root,
        profile: profile.clone(),
        prepared: false,
        dependencies: Vec::new(),
        limits,
    };
    for dir in [".onx/tmp", ".onx/runs"] {
        let p = ws.root.join(dir);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let want = PreparedMarker {
        profile: profile.id.clone(),
        dependencies: spec.dependencies.clone(),
    };
    let marker_path = ws.root.join(MARKER);
    let existing: Option<PreparedMarker> = fs::read_to_string(&marker_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    if existing.as_ref() == Some(&want) {
        ws.prepared = true;
        ws.dependencies = want.dependencies;
        return Ok(ws);
    }

    let install_timeout = Duration::from_secs(limits.install_timeout_secs);
    if !profile.environment_create_command.is_empty() && !ws.env_dir().exists() {
        let argv = ws
            .vars()
            .render(&profile.environment_create_command)
            .map_err(HarnessError::Command)?;
        let c = ws.exec(&argv, None, install_timeout)?;
        if c.exit_code != Some(0) {
            return Err(HarnessError::EnvironmentFailed {
                exit_code: c.exit_code,
                output: c.combined(),
            });
        }
    }
    if !spec.dependencies.is_empty() {
        if profile.dependency_install_command.is_empty() {
            return Err(HarnessError::Command(
                "project declares dependencies but the profile has no install command".into(),
            ));
        }
        let deps = ws.deps_dir();
        fs::create_dir_all(&deps).map_err(io_err(&deps))?;
        let argv = ws
            .vars()
            .set_list("packages", spec.dependencies.clone())
            .render(&profile.dependency_install_command)
            .map_err(HarnessError::Command)?;
        info!(dependencies = ?spec.dependencies, "installing dependencies");
        let c = ws.exec(&argv, None, install_timeout)?;
        if c.exit_code != Some(0) {
            return Err(HarnessError::InstallFailed {
                exit_code: c.exit_code,
                output: c.combined(),
            });
        }
    }
    let json = serde_json::to_string_pretty(&want).expect("marker serializes");
    fs::write(&marker_path, json).map_err(io_err(&marker_path))?;
    ws.prepared = true;
    ws.dependencies = want.dependencies;
    Ok(ws)
}
