use std::fs;
use std::path::Path;
use std::time::Duration;

use onx::harness::{prepare_workspace, CaseOutcome, HarnessLimits, TestScope, Workspace};
use onx::spec::{ClassRef, ProjectSpec, TargetProfile};

const CALC: &str = "class Calc:\n    def add(self, a, b):\n        return a + b\n\n    def sub(self, a, b):\n        return a + b\n";

const CALC_TESTS: &str = "\
from pkg.calc import Calc


def test_add():
    assert Calc().add(2, 3) == 5


def test_add_negative():
    assert Calc().add(-2, -3) == -5


def test_add_zero():
    assert Calc().add(0, 0) == 0


def test_sub():
    assert Calc().sub(5, 3) == 2
";

fn project(deps: &[&str]) -> ProjectSpec {
    let deps = deps.iter().map(|d| format!("  - {d}\n")).collect::<String>();
    let deps = if deps.is_empty() { " []\n".to_string() } else { format!("\n{deps}") };
    ProjectSpec::from_yaml_str(&format!(
        "name: calc\ndescription: [A calculator.]\ndependencies:{deps}acceptance_tests: [It adds.]\n"
    ))
    .unwrap()
}

fn write(root: &Path, rel: &str, text: &str) {
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

fn pytest_workspace(root: &Path) -> Workspace {
    prepare_workspace(&project(&[]), &TargetProfile::default_profile(), root, HarnessLimits::default())
        .unwrap()
}

fn unit(file: &str) -> TestScope {
    TestScope::Unit {
        class: ClassRef::new("pkg", "Calc"),
        file: file.into(),
    }
}

#[test]
fn pytest_counts_three_passed_one_failed() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pkg/calc.py", CALC);
    write(dir.path(), "tests/test_calc.py", CALC_TESTS);
    let ws = pytest_workspace(dir.path());
    let report = ws.run_tests(&unit("tests/test_calc.py")).unwrap();
    assert!(!report.infra_failure, "{}", report.raw_output);
    assert_eq!((report.collected, report.passed, report.failed), (4, 3, 1));
    assert!(!report.is_green());
    let failing: Vec<_> = report.failing_cases().map(|c| c.id.as_str()).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].ends_with("test_sub"), "{failing:?}");
    assert!(report.raw_output.contains("assert 8 == 2"), "{}", report.raw_output);

    let run = ws.runs_dir().join(report.run_id.as_ref().unwrap());
    assert_eq!(fs::read_to_string(run.join("output.txt")).unwrap(), report.raw_output);
    assert!(run.join("report.xml").is_file());
}

#[test]
fn fixed_code_is_green() {
    let dir = tempfile::tempdir().unwrap();
    let fixed = CALC.replace("def sub(self, a, b):\n        return a + b", "def sub(self, a, b):\n        return a - b");
    write(dir.path(), "pkg/calc.py", &fixed);
    write(dir.path(), "tests/test_calc.py", CALC_TESTS);
    let report = pytest_workspace(dir.path()).run_tests(&unit("tests/test_calc.py")).unwrap();
    assert!(report.is_green(), "{}", report.summary());
    assert!(report.cases.iter().all(|c| c.outcome == CaseOutcome::Passed));
}

#[test]
fn syntax_error_in_code_is_an_infra_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pkg/calc.py", "class Calc:\n    def add(self, a, b)\n        return a + b\n");
    write(dir.path(), "tests/test_calc.py", CALC_TESTS);
    let report = pytest_workspace(dir.path()).run_tests(&unit("tests/test_calc.py")).unwrap();
    assert!(report.infra_failure || report.errored > 0, "{}", report.summary());
    assert!(!report.is_green());
    assert!(report.raw_output.contains("SyntaxError"), "{}", report.raw_output);
}

#[test]
fn file_without_tests_is_not_green() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tests/test_empty.py", "# nothing here yet\n");
    let report = pytest_workspace(dir.path()).run_tests(&unit("tests/test_empty.py")).unwrap();
    assert!(report.infra_failure);
    assert_eq!(report.collected, 0);
    assert!(!report.is_green());
}

#[test]
fn skipped_tests_count_as_failed() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "tests/test_skip.py",
        "import pytest\n\n\ndef test_ok():\n    pass\n\n\n@pytest.mark.skip\ndef test_later():\n    pass\n",
    );
    let report = pytest_workspace(dir.path()).run_tests(&unit("tests/test_skip.py")).unwrap();
    assert_eq!((report.collected, report.passed, report.failed), (2, 1, 1));
    assert!(!report.is_green());
}

#[test]
fn missing_test_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = pytest_workspace(dir.path()).run_tests(&unit("tests/test_nope.py")).unwrap_err();
    assert!(err.to_string().contains("tests/test_nope.py"));
}

#[test]
fn hanging_test_times_out() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tests/test_hang.py", "import time\n\n\ndef test_hang():\n    time.sleep(60)\n");
    let limits = HarnessLimits {
        test_timeout_secs: 1,
        ..Default::default()
    };
    let ws = prepare_workspace(&project(&[]), &TargetProfile::default_profile(), dir.path(), limits).unwrap();
    let started = std::time::Instant::now();
    let report = ws.run_tests(&unit("tests/test_hang.py")).unwrap();
    assert!(started.elapsed() < Duration::from_secs(30));
    assert!(report.infra_failure);
    assert!(report.raw_output.contains("timed out"));
}

#[test]
fn run_program_captures_output_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "main.py",
        "import sys\n\nif sys.argv[1:] == ['fail']:\n    print('bad input', file=sys.stderr)\n    sys.exit(3)\nprint('hello ' + ' '.join(sys.argv[1:]))\n",
    );
    let ws = pytest_workspace(dir.path());
    let ok = ws.run_program(&["world".into()], None, Duration::from_secs(30)).unwrap();
    assert_eq!(ok.exit_code, Some(0));
    assert_eq!(ok.stdout, "hello world\n");
    let bad = ws.run_program(&["fail".into()], None, Duration::from_secs(30)).unwrap();
    assert_eq!(bad.exit_code, Some(3));
    assert_eq!(bad.stderr, "bad input\n");
}

#[test]
fn run_program_without_entry_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = pytest_workspace(dir.path())
        .run_program(&[], None, Duration::from_secs(5))
        .unwrap_err();
    assert!(err.to_string().contains("main.py"));
}

fn logging_profile() -> TargetProfile {
    let base = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/python-pytest.toml")).unwrap();
    let install = r#"dependency_install_command = [
    "python3", "-c",
    "import sys; open(sys.argv[1], 'a').write(' '.join(sys.argv[2:]) + '\\n')",
    "{workspace}/.onx/install.log", "{packages}",
]"#;
    let start = base.find("\ndependency_install_command").unwrap() + 1;
    let end = start + base[start..].find("]\n").unwrap() + 2;
    let text = format!("{}{install}\n{}", &base[..start], &base[end..]).replace("python-pytest", "logging");
    TargetProfile::from_toml_str(&text).unwrap()
}

#[test]
fn dependencies_install_once_and_prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = project(&["bibtexparser"]);
    let profile = logging_profile();
    let ws = prepare_workspace(&spec, &profile, dir.path(), HarnessLimits::default()).unwrap();
    assert!(ws.is_prepared());
    assert_eq!(ws.installed_dependencies(), ["bibtexparser".to_string()]);
    prepare_workspace(&spec, &profile, dir.path(), HarnessLimits::default()).unwrap();
    let log = fs::read_to_string(dir.path().join(".onx/install.log")).unwrap();
    assert_eq!(log, "bibtexparser\n");
}

#[test]
fn changed_dependencies_reinstall() {
    let dir = tempfile::tempdir().unwrap();
    let profile = logging_profile();
    prepare_workspace(&project(&["a"]), &profile, dir.path(), HarnessLimits::default()).unwrap();
    prepare_workspace(&project(&["a", "b"]), &profile, dir.path(), HarnessLimits::default()).unwrap();
    let log = fs::read_to_string(dir.path().join(".onx/install.log")).unwrap();
    assert_eq!(log, "a\na b\n");
}

#[test]
fn failing_install_reports_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/python-pytest.toml"))
        .unwrap()
        .replace("\"--target\", \"{deps_dir}\", \"{packages}\"", "\"--no-index\", \"--target\", \"{deps_dir}\", \"{packages}\"");
    let profile = TargetProfile::from_toml_str(&text).unwrap();
    let err = prepare_workspace(
        &project(&["surely-not-a-real-package-xyz"]),
        &profile,
        dir.path(),
        HarnessLimits::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("dependency install failed"), "{err}");
}
