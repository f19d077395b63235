//! The `onx` command line.
//!
//! Exit codes: 0 target reached or done, 2 awaiting review, 3 aborted,
//! 4 configuration error, 1 anything else.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tracing_subscriber::EnvFilter;

use crate::api;
use crate::llm::ProviderConfig;
use crate::pipeline::{Pipeline, PipelineError, PipelineOptions, RunOutcome, Target};
use crate::spec::{scaffold_project_template, TargetProfile};
use crate::store::{
    compare_sessions, compute_metrics, export_session, load_session, read_session, MetricsReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_AWAITING_REVIEW: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "onx", version, about = "Test-oriented code generation with reviewed tests")]
pub struct Cli {
    /// Workspace directory.
    #[arg(short = 'C', long = "workspace", global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Print one JSON document instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(flatten)]
    pub session: SessionFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SessionFlags {
    /// Live provider to use (API key read from OPENAI_API_KEY or GEMINI_API_KEY).
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderChoice>,
    /// Model name for the live provider.
    #[arg(long, global = true, requires = "provider")]
    pub model: Option<String>,
    /// Override the provider endpoint base URL.
    #[arg(long, global = true, requires = "provider")]
    pub endpoint: Option<String>,
    /// Maximum generation attempts per artifact per round.
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    /// Append every provider exchange to this fixture.
    #[arg(long, global = true, value_name = "FIXTURE")]
    pub record: Option<PathBuf>,
    /// Serve responses from a recorded fixture (file or directory).
    #[arg(long, global = true, value_name = "FIXTURE", conflicts_with = "provider")]
    pub replay: Option<PathBuf>,
    /// Approve every checkpoint automatically.
    #[arg(long, global = true)]
    pub yes: bool,
    /// Directory with replacement prompt templates.
    #[arg(long, global = true, value_name = "DIR")]
    pub prompts: Option<PathBuf>,
    /// Target profile id or path to a profile file.
    #[arg(long, global = true)]
    pub profile: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderChoice {
    Openai,
    Gemini,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a project.yaml template into DIR.
    Init {
        dir: PathBuf,
        /// Project name (defaults to the directory name).
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate the structure plan and open its review checkpoint.
    Plan,
    /// Generate acceptance and unit tests and open their checkpoints.
    Tests,
    /// Approve pending structure or test artifacts.
    Approve {
        /// Artifact id, e.g. `structure` or `unit_tests:pkg.Class`.
        artifact: Option<String>,
        #[arg(long, conflicts_with = "artifact")]
        all: bool,
    },
    /// Generate the classes and the entry point until done or aborted.
    Build,
    /// Continue after an abort (picking up edited tests) or an interruption.
    Resume,
    /// Show the phase and the artifacts awaiting review.
    Status,
    /// Print the metrics report, optionally compared with another workspace.
    Metrics {
        #[arg(long, value_name = "WORKSPACE")]
        compare: Option<PathBuf>,
    },
    /// Bundle the session record, logs and generated files into a .tar.gz.
    Export { archive: PathBuf },
    /// Start the local control API.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, text: &str, value: Value) {
        if self.json {
            say(&serde_json::to_string_pretty(&value).expect("json"));
        } else if !text.is_empty() {
            say(text);
        }
    }
}

/// `println!` without the panic when the reader has gone away (`| head`).
fn say(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|d| d.join(path))
            .unwrap_or_else(|_| path.to_path_buf())
    }
}

impl SessionFlags {
    pub fn options(&self) -> PipelineOptions {
        let provider = if let Some(fixture) = &self.replay {
            Some(ProviderConfig::replay(absolute(fixture)))
        } else {
            self.provider.map(|choice| {
                let mut config = match choice {
                    ProviderChoice::Openai => ProviderConfig::openai(self.model.as_deref()),
                    ProviderChoice::Gemini => ProviderConfig::gemini(self.model.as_deref()),
                };
                if let Some(endpoint) = &self.endpoint {
                    config.endpoint = Some(endpoint.clone());
                }
                config
            })
        };
        PipelineOptions {
            provider,
            record_to: self.record.as_deref().map(absolute),
            max_attempts: self.max_attempts,
            prompts_dir: self.prompts.as_deref().map(absolute),
            profile: self.profile.clone(),
            limits: None,
            provider_instance: None,
        }
    }
}

fn error_exit(out: &Output, e: &PipelineError) -> i32 {
    let code = if e.is_config() { EXIT_CONFIG } else { EXIT_ERROR };
    if out.json {
        out.emit("", json!({ "outcome": "error", "message": e.to_string(), "exit_code": code }));
    } else {
        eprintln!("error: {e}");
    }
    code
}

fn describe(outcome: &RunOutcome, pipeline: &Pipeline) -> String {
    match outcome {
        RunOutcome::Done => "done: every unit and acceptance test passes".into(),
        RunOutcome::Reached { phase } => format!("phase: {phase}"),
        RunOutcome::AwaitingReview { .. } => {
            let mut text = String::from("awaiting review; edit these files if needed, then approve:\n");
            for a in pipeline.pending_reviews() {
                text.push_str(&format!("  {:<36} {}\n", a.id, a.path));
            }
            text.push_str("run `onx approve <id>` or `onx approve --all`");
            text
        }
        RunOutcome::Aborted { report } => {
            let mut text = format!("aborted in {}: {}\n", report.phase, report.message);
            if let Some(a) = &report.artifact {
                text.push_str(&format!("artifact: {a} ({} attempts)\n", report.attempts));
            }
            if !report.failure_excerpt.is_empty() {
                text.push_str("last failure:\n");
                text.push_str(&report.failure_excerpt);
                if !report.failure_excerpt.ends_with('\n') {
                    text.push('\n');
                }
            }
            text.push_str("next steps:\n");
            for g in &report.guidance {
                text.push_str(&format!("  - {g}\n"));
            }
            text.push_str("then run `onx resume`");
            text
        }
    }
}

fn report_run(out: &Output, pipeline: &Pipeline, outcome: &RunOutcome) -> i32 {
    let code = outcome.exit_code();
    let pending: Vec<Value> = pipeline
        .pending_reviews()
        .iter()
        .map(|a| json!({ "id": a.id, "path": a.path }))
        .collect();
    out.emit(
        &describe(outcome, pipeline),
        json!({
            "result": outcome,
            "phase": pipeline.phase(),
            "pending": pending,
            "exit_code": code,
        }),
    );
    code
}

fn drive(cli: &Cli, out: &Output, target: Target, resume: bool) -> i32 {
    let mut pipeline = match Pipeline::open(&cli.workspace, cli.session.options()) {
        Ok(p) => p,
        Err(e) => return error_exit(out, &e),
    };
    if resume {
        match pipeline.resume() {
            Ok(Some(phase)) if !out.json => say(&format!("resuming at {phase}")),
            Ok(_) => {}
            Err(e) => return error_exit(out, &e),
        }
    }
    match pipeline.run(target, cli.session.yes) {
        Ok(outcome) => report_run(out, &pipeline, &outcome),
        Err(e) => error_exit(out, &e),
    }
}

fn approve(cli: &Cli, out: &Output, artifact: Option<&str>, all: bool) -> i32 {
    let mut pipeline = match Pipeline::open(&cli.workspace, cli.session.options()) {
        Ok(p) => p,
        Err(e) => return error_exit(out, &e),
    };
    let result = match (artifact, all) {
        (Some(id), _) => pipeline.approve(id).map(|modified| vec![(id.to_string(), modified)]),
        (None, true) => {
            let ids: Vec<String> = pipeline.pending_reviews().iter().map(|a| a.id.clone()).collect();
            ids.into_iter()
                .map(|id| pipeline.approve(&id).map(|m| (id, m)))
                .collect()
        }
        (None, false) => {
            eprintln!("error: name an artifact or pass --all");
            return EXIT_ERROR;
        }
    };
    match result {
        Ok(approved) => {
            let text = if approved.is_empty() {
                "nothing to approve".to_string()
            } else {
                approved
                    .iter()
                    .map(|(id, m)| format!("approved {id}{}", if *m { " (modified)" } else { "" }))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let list: Vec<Value> = approved
                .iter()
                .map(|(id, m)| json!({ "id": id, "modified": m }))
                .collect();
            out.emit(
                &text,
                json!({ "approved": list, "phase": pipeline.phase(), "exit_code": EXIT_OK }),
            );
            EXIT_OK
        }
        Err(e) => error_exit(out, &e),
    }
}

fn status(cli: &Cli, out: &Output) -> i32 {
    let session = match load_session(&cli.workspace) {
        Ok(s) => s,
        Err(e) => return error_exit(out, &e.into()),
    };
    let pending: Vec<_> = session.pending_reviews();
    let mut text = format!("phase: {}\nrevision: {}", session.phase, session.revision);
    for a in &pending {
        text.push_str(&format!("\npending: {} ({})", a.id, a.path));
    }
    let ids: Vec<&str> = pending.iter().map(|a| a.id.as_str()).collect();
    out.emit(
        &text,
        json!({
            "phase": session.phase,
            "revision": session.revision,
            "pending": ids,
            "last_abort": session.last_abort,
        }),
    );
    EXIT_OK
}

fn load_metrics(root: &Path) -> Result<MetricsReport, PipelineError> {
    let session = read_session(root)?;
    let profile = TargetProfile::resolve(&session.profile_id, root)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(compute_metrics(&session, root, &profile.line_comment_prefix))
}

fn metrics_text(m: &MetricsReport) -> String {
    let mut text = format!(
        "phase: {}\ninterventions: {}\nprovider calls: {} ({} ms)\naborts: {}\n\n{:<40} {:>6} {:>8} {:>8}\n",
        m.phase,
        m.session.interventions,
        m.session.provider_calls,
        m.session.total_latency_ms,
        m.session.aborts,
        "file",
        "lines",
        "comments",
        "density"
    );
    for (path, f) in &m.files {
        text.push_str(&format!(
            "{:<40} {:>6} {:>8} {:>8.3}\n",
            path, f.total_lines, f.comment_lines, f.comment_density
        ));
    }
    text.push('\n');
    for (id, a) in &m.artifacts {
        if a.attempts > 0 && !id.starts_with("unit_tests") && id != "acceptance_tests" && id != "structure" {
            text.push_str(&format!("{id}: {} attempt(s) over {} round(s)\n", a.attempts, a.rounds));
        }
    }
    text.trim_end().to_string()
}

fn metrics(cli: &Cli, out: &Output, compare: Option<&Path>) -> i32 {
    let report = match load_metrics(&cli.workspace) {
        Ok(r) => r,
        Err(e) => return error_exit(out, &e),
    };
    let Some(other) = compare else {
        out.emit(&metrics_text(&report), serde_json::to_value(&report).expect("json"));
        return EXIT_OK;
    };
    let other_report = match load_metrics(other) {
        Ok(r) => r,
        Err(e) => return error_exit(out, &e),
    };
    let cmp = compare_sessions(&report, &other_report);
    let mut text = format!(
        "{:<40} {:>8} {:>10} {}\n",
        "file", "Δlines", "Δdensity", "diverged"
    );
    for f in &cmp.files {
        text.push_str(&format!(
            "{:<40} {:>8} {:>10.3} {}\n",
            f.path, f.lines_delta, f.density_delta, f.diverged
        ));
    }
    for d in cmp.artifacts.iter().filter(|d| d.attempts_delta != 0) {
        text.push_str(&format!("{}: attempts {} -> {}\n", d.artifact, d.attempts_a, d.attempts_b));
    }
    for p in &cmp.only_in_a {
        text.push_str(&format!("only in this workspace: {p}\n"));
    }
    for p in &cmp.only_in_b {
        text.push_str(&format!("only in the other workspace: {p}\n"));
    }
    text.push_str(&format!("diverged files: {}", cmp.diverged_files));
    out.emit(&text, serde_json::to_value(&cmp).expect("json"));
    EXIT_OK
}

fn export(cli: &Cli, out: &Output, archive: &Path) -> i32 {
    let session = match read_session(&cli.workspace) {
        Ok(s) => s,
        Err(e) => return error_exit(out, &e.into()),
    };
    match export_session(&cli.workspace, &session, archive) {
        Ok(entries) => {
            out.emit(
                &format!("wrote {} ({} files)", archive.display(), entries.len()),
                json!({ "archive": archive, "entries": entries }),
            );
            EXIT_OK
        }
        Err(e) => error_exit(out, &e.into()),
    }
}

fn init(out: &Output, dir: &Path, name: Option<&str>) -> i32 {
    let name = name.map(str::to_string).unwrap_or_else(|| {
        absolute(dir)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "project".into())
    });
    match scaffold_project_template(dir, &name) {
        Ok(path) => {
            out.emit(
                &format!(
                    "wrote {}; fill in `description` and `acceptance_tests`, then run `onx plan`",
                    path.display()
                ),
                json!({ "project_file": path }),
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn serve(cli: &Cli, host: IpAddr, port: u16) -> i32 {
    let root = match cli.workspace.canonicalize() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.workspace.display());
            return EXIT_CONFIG;
        }
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    let addr = SocketAddr::new(host, port);
    eprintln!("serving {} on http://{addr}", root.display());
    match runtime.block_on(api::serve(&root, cli.session.options(), addr)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run_with(cli: Cli) -> i32 {
    let out = Output { json: cli.json };
    match &cli.command {
        Command::Init { dir, name } => init(&out, dir, name.as_deref()),
        Command::Plan => drive(&cli, &out, Target::StructureApproved, false),
        Command::Tests => drive(&cli, &out, Target::TestsApproved, false),
        Command::Build => drive(&cli, &out, Target::Done, false),
        Command::Resume => drive(&cli, &out, Target::Done, true),
        Command::Approve { artifact, all } => approve(&cli, &out, artifact.as_deref(), *all),
        Command::Status => status(&cli, &out),
        Command::Metrics { compare } => metrics(&cli, &out, compare.as_deref()),
        Command::Export { archive } => export(&cli, &out, archive),
        Command::Serve { port, host } => serve(&cli, *host, *port),
    }
}

/// Entry point of the `onx` binary; returns the process exit code.
pub fn run() -> i32 {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("ONX_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    run_with(Cli::parse())
}
