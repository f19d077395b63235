use serde::{Deserialize, Serialize};

use crate::spec::ClassRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOutcome {
    Passed,
    Failed,
    Errored,
    /// Counted as failed: a skipped test verifies nothing.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub outcome: CaseOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Which tests a run covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestScope {
    Unit { class: ClassRef, file: String },
    UnitAll { files: Vec<String> },
    Acceptance { file: String },
}

impl TestScope {
    pub fn kind(&self) -> ScopeKind {
        match self {
            TestScope::Unit { class, .. } => ScopeKind::Unit(class.clone()),
            TestScope::UnitAll { .. } => ScopeKind::UnitAll,
            TestScope::Acceptance { .. } => ScopeKind::Acceptance,
        }
    }

    pub fn files(&self) -> Vec<String> {
        match self {
            TestScope::Unit { file, .. } | TestScope::Acceptance { file } => vec![file.clone()],
            TestScope::UnitAll { files } => files.clone(),
        }
    }

    pub(crate) fn label(&self) -> String {
        match self {
            TestScope::Unit { class, .. } => format!("unit-{class}"),
            TestScope::UnitAll { .. } => "unit-all".into(),
            TestScope::Acceptance { .. } => "acceptance".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Unit(ClassRef),
    UnitAll,
    Acceptance,
}

/// Parsed result of one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub scope: ScopeKind,
    pub collected: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
    pub cases: Vec<TestCase>,
    pub raw_output: String,
    pub duration_secs: f64,
    /// Runner-level breakage: collection error, import failure, timeout,
    /// nothing collected.
    pub infra_failure: bool,
    pub exit_code: Option<i32>,
    /// Directory name under `.onx/runs` holding this run's output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl TestReport {
    pub(crate) fn from_cases(
        scope: ScopeKind,
        cases: Vec<TestCase>,
        raw_output: String,
        duration_secs: f64,
        exit_code: Option<i32>,
    ) -> Self {
        let count = |pred: fn(CaseOutcome) -> bool| cases.iter().filter(|c| pred(c.outcome)).count();
        Self {
            scope,
            collected: cases.len(),
            passed: count(|o| o == CaseOutcome::Passed),
            failed: count(|o| matches!(o, CaseOutcome::Failed | CaseOutcome::Skipped)),
            errored: count(|o| o == CaseOutcome::Errored),
            cases,
            raw_output,
            duration_secs,
            infra_failure: false,
            exit_code,
            run_id: None,
        }
    }

    pub(crate) fn infra(
        scope: ScopeKind,
        raw_output: String,
        duration_secs: f64,
        exit_code: Option<i32>,
    ) -> Self {
        Self {
            scope,
            collected: 0,
            passed: 0,
            failed: 0,
            errored: 0,
            cases: Vec::new(),
            raw_output,
            duration_secs,
            infra_failure: true,
            exit_code,
            run_id: None,
        }
    }

    /// Every collected test ran and passed.
    pub fn is_green(&self) -> bool {
        !self.infra_failure && self.collected > 0 && self.passed == self.collected
    }

    pub fn failing_cases(&self) -> impl Iterator<Item = &TestCase> {
        self.cases.iter().filter(|c| c.outcome != CaseOutcome::Passed)
    }

    pub fn summary(&self) -> String {
        if self.infra_failure {
            format!("runner failure (exit {:?})", self.exit_code)
        } else {
            format!(
                "{} collected, {} passed, {} failed, {} errored",
                self.collected, self.passed, self.failed, self.errored
            )
        }
    }
}
