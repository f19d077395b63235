#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onx::llm::{read_fixture, FixtureRecord, ProviderConfig, FIXTURE_FILE};
use onx::pipeline::{Pipeline, PipelineOptions, RunOutcome, Target};
use onx::prompt::TemplateId;
use onx::spec::{serialize_project, serialize_structure, IdentifierRule, ProjectSpec, SchemaError, StructurePlan};
use onx::store::hash_bytes;
use tempfile::TempDir;

pub fn bibtex_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bibtex")
}

pub fn bibtex_records() -> Vec<FixtureRecord> {
    read_fixture(&bibtex_dir().join(FIXTURE_FILE)).expect("shipped fixture parses")
}

/// A temp dir holding the BibTeX `project.yaml` and nothing else.
pub fn bibtex_workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(bibtex_dir().join("project.yaml"), dir.path().join("project.yaml")).unwrap();
    dir
}

/// Writes `records` as a fixture directory inside `parent`.
pub fn write_fixture(parent: &Path, name: &str, records: &[FixtureRecord]) -> PathBuf {
    let dir = parent.join(name);
    fs::create_dir_all(&dir).unwrap();
    let body: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    fs::write(dir.join(FIXTURE_FILE), body).unwrap();
    dir
}

pub fn replay(fixture: &Path) -> PipelineOptions {
    PipelineOptions {
        provider: Some(ProviderConfig::replay(fixture)),
        ..Default::default()
    }
}

pub fn open(root: &Path, options: PipelineOptions) -> Pipeline {
    Pipeline::open(root, options).expect("pipeline opens")
}

pub fn run_auto(root: &Path, options: PipelineOptions, target: Target) -> RunOutcome {
    open(root, options).run(target, true).expect("run succeeds")
}

pub fn record_for<'a>(records: &'a [FixtureRecord], artifact: &str, attempt: u32) -> &'a FixtureRecord {
    records
        .iter()
        .find(|r| r.artifact == artifact && r.attempt == attempt)
        .unwrap_or_else(|| panic!("no record for {artifact} attempt {attempt}"))
}

/// The shipped fixture with the EntryStore class failing `failures` times
/// in a row (the broken first attempt repeated), then optionally passing.
pub fn entry_store_variant(failures: u32, then_pass: bool) -> Vec<FixtureRecord> {
    let records = bibtex_records();
    let id = "class_code:storage.EntryStore";
    let broken = record_for(&records, id, 1).clone();
    let fixed = record_for(&records, id, 2).clone();
    let mut out: Vec<FixtureRecord> = records.iter().filter(|r| r.artifact != id).cloned().collect();
    let at = out.iter().position(|r| r.artifact == "main_code").unwrap();
    let mut inserted = Vec::new();
    for attempt in 1..=failures {
        let mut r = broken.clone();
        r.attempt = attempt;
        r.template = if attempt == 1 {
            TemplateId::ClassCodeGen
        } else {
            TemplateId::ClassCodeRepair
        };
        inserted.push(r);
    }
    if then_pass {
        let mut r = fixed;
        r.attempt = failures + 1;
        r.template = if failures == 0 {
            TemplateId::ClassCodeGen
        } else {
            TemplateId::ClassCodeRepair
        };
        inserted.push(r);
    }
    out.splice(at..at, inserted);
    for (i, r) in out.iter_mut().enumerate() {
        r.seq = i as u64 + 1;
    }
    out
}

/// Hash of every file under `root`, keyed by relative path, skipping the
/// session directory and interpreter caches.
pub fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if path.is_dir() {
            if name == ".onx" || name == "__pycache__" || name == ".pytest_cache" {
                continue;
            }
            walk(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
            out.insert(rel, hash_bytes(&fs::read(&path).unwrap()));
        }
    }
}

pub fn onx_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_onx"));
    cmd.env_remove("ONX_CRASH_AT").env_remove("ONX_LOG");
    cmd
}

/// Runs the `onx` binary against `root` with `args`.
pub fn onx(root: &Path, args: &[&str]) -> Output {
    onx_bin().arg("-C").arg(root).args(args).output().expect("onx runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn describe(out: &Output) -> String {
    format!(
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

pub fn corpus(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(kind);
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "yaml"))
        .collect();
    files.sort();
    files
}

pub fn is_project(path: &Path) -> bool {
    path.file_name().unwrap().to_string_lossy().starts_with("project_")
}

pub fn parse(path: &Path) -> Result<String, SchemaError> {
    let text = fs::read_to_string(path).unwrap();
    if is_project(path) {
        ProjectSpec::from_yaml_str(&text).map(|s| serialize_project(&s))
    } else {
        StructurePlan::from_yaml_str(&text, &IdentifierRule::default()).map(|p| serialize_structure(&p))
    }
}

fn expected_path(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("# expect: "))
        .unwrap_or_else(|| panic!("{} lacks an `# expect:` line", path.display()))
        .trim()
        .to_string()
}

/// Checks every corpus file; returns one message per mismatch.
pub fn corpus_failures() -> (usize, usize, Vec<String>) {
    let mut failures = Vec::new();
    let valid = corpus("valid");
    for path in &valid {
        let text = fs::read_to_string(path).unwrap();
        match parse(path) {
            Ok(out) if out == text => {}
            Ok(_) => failures.push(format!("{} does not roundtrip", path.display())),
            Err(e) => failures.push(format!("{} rejected: {e}", path.display())),
        }
    }
    let invalid = corpus("invalid");
    for path in &invalid {
        let want = expected_path(path);
        match parse(path) {
            Ok(_) => failures.push(format!("{} accepted", path.display())),
            Err(e) if e.paths().contains(&want.as_str()) => {}
            Err(e) => failures.push(format!("{}: want {want}, got {e}", path.display())),
        }
    }
    (valid.len(), invalid.len(), failures)
}

/// Applies `edit` to the code inside every production-code response.
pub fn map_production_code(records: &[FixtureRecord], edit: impl Fn(&str) -> String) -> Vec<FixtureRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            if r.artifact.starts_with("class_code:") || r.artifact == "main_code" {
                let code = onx::llm::extract_code(&r.response).expect("fixture code is fenced");
                r.response = format!("```python\n{}\n```\n", edit(&code).trim_end());
            }
            r
        })
        .collect()
}

/// Drops every whole-line comment.
pub fn strip_comments(code: &str) -> String {
    code.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Puts a comment line above every class and function definition.
pub fn annotate(code: &str) -> String {
    let mut out = String::new();
    for line in code.lines() {
        let body = line.trim_start();
        if body.starts_with("def ") || body.starts_with("class ") {
            let indent = &line[..line.len() - body.len()];
            let name = body.split(['(', ':']).next().unwrap_or(body);
            out.push_str(&format!("{indent}# {name}: see the unit tests for the expected behaviour.\n"));
            out.push_str(&format!("{indent}# Inputs are validated by the caller.\n"));
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Whole-line comment count and line count of a Python file, as reported
/// by the interpreter's own tokenizer.
pub fn python_comment_lines(path: &Path) -> (usize, usize) {
    let script = "import sys, tokenize\n\
        src = open(sys.argv[1], encoding='utf-8').read()\n\
        lines = src.splitlines()\n\
        rows = set()\n\
        for tok in tokenize.generate_tokens(iter(src.splitlines(True)).__next__):\n\
        \x20   if tok.type == tokenize.COMMENT and lines[tok.start[0] - 1].lstrip().startswith('#'):\n\
        \x20       rows.add(tok.start[0])\n\
        print(len(rows), len(lines))\n";
    let out = Command::new("python3").arg("-c").arg(script).arg(path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut it = text.split_whitespace().map(|n| n.parse().unwrap());
    (it.next().unwrap(), it.next().unwrap())
}
