use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{hash_bytes, TRANSCRIPT_FILE};
use crate::llm::read_transcript;
use crate::pipeline::{ReviewStatus, SessionState, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCounts {
    pub total: usize,
    pub comment: usize,
}

impl LineCounts {
    /// Comment lines over total lines; 0 for an empty file.
    pub fn density(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.comment as f64 / self.total as f64
        }
    }
}

/// Blank lines count toward the total but never as comments.
pub fn count_lines(text: &str, comment_prefix: &str) -> LineCounts {
    let mut counts = LineCounts { total: 0, comment: 0 };
    for line in text.lines() {
        counts.total += 1;
        let trimmed = line.trim_start();
        if !trimmed.is_empty() && !comment_prefix.is_empty() && trimmed.starts_with(comment_prefix) {
            counts.comment += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetrics {
    pub path: String,
    pub review_status: ReviewStatus,
    pub rounds: u32,
    pub attempts: usize,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetrics {
    pub artifact: String,
    pub present: bool,
    pub total_lines: usize,
    pub comment_lines: usize,
    pub comment_density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub interventions: usize,
    pub provider_calls: usize,
    pub total_latency_ms: u64,
    pub aborts: u32,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session_id: String,
    pub phase: String,
    pub artifacts: BTreeMap<String, ArtifactMetrics>,
    /// Keyed by workspace-relative path.
    pub files: BTreeMap<String, FileMetrics>,
    pub session: SessionMetrics,
}

impl MetricsReport {
    /// Equality ignoring wall-clock time, the one field that differs
    /// between otherwise identical runs.
    pub fn same_outcome(&self, other: &MetricsReport) -> bool {
        let strip = |m: &MetricsReport| {
            let mut m = m.clone();
            m.session_id.clear();
            m.session.wall_time_secs = 0.0;
            m
        };
        strip(self) == strip(other)
    }
}

/// Missing files are reported with `present: false`, not as errors.
pub fn compute_metrics(state: &SessionState, root: &Path, comment_prefix: &str) -> MetricsReport {
    let mut artifacts = BTreeMap::new();
    let mut files = BTreeMap::new();
    for a in &state.artifacts {
        artifacts.insert(
            a.id.clone(),
            ArtifactMetrics {
                path: a.path.clone(),
                review_status: a.review_status,
                rounds: state.rounds.get(&a.id).copied().unwrap_or(0),
                attempts: a.attempts.len(),
                verdicts: a.attempts.iter().map(|t| t.verdict).collect(),
            },
        );
        let file = match fs::read(root.join(&a.path)) {
            Ok(bytes) => {
                let counts = count_lines(&String::from_utf8_lossy(&bytes), comment_prefix);
                FileMetrics {
                    artifact: a.id.clone(),
                    present: true,
                    total_lines: counts.total,
                    comment_lines: counts.comment,
                    comment_density: counts.density(),
                    hash: Some(hash_bytes(&bytes)),
                }
            }
            Err(_) => FileMetrics {
                artifact: a.id.clone(),
                present: false,
                total_lines: 0,
                comment_lines: 0,
                comment_density: 0.0,
                hash: None,
            },
        };
        files.insert(a.path.clone(), file);
    }
    let transcript = read_transcript(&root.join(TRANSCRIPT_FILE), 0).unwrap_or_default();
    let wall = (state.updated - state.created).num_milliseconds().max(0) as f64 / 1000.0;
    MetricsReport {
        session_id: state.session_id.clone(),
        phase: state.phase.to_string(),
        artifacts,
        files,
        session: SessionMetrics {
            interventions: state.intervention_count(),
            provider_calls: transcript.len(),
            total_latency_ms: transcript.iter().map(|r| r.latency_ms).sum(),
            aborts: state.aborts,
            wall_time_secs: wall,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDelta {
    pub path: String,
    pub lines_a: usize,
    pub lines_b: usize,
    pub lines_delta: i64,
    pub density_a: f64,
    pub density_b: f64,
    pub density_delta: f64,
    /// Content hashes differ.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDelta {
    pub artifact: String,
    pub attempts_a: usize,
    pub attempts_b: usize,
    pub attempts_delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionComparison {
    pub files: Vec<FileDelta>,
    pub artifacts: Vec<ArtifactDelta>,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    pub diverged_files: usize,
}

impl SessionComparison {
    pub fn is_identical(&self) -> bool {
        self.diverged_files == 0
            && self.only_in_a.is_empty()
            && self.only_in_b.is_empty()
            && self.files.iter().all(|f| f.lines_delta == 0 && f.density_delta == 0.0)
            && self.artifacts.iter().all(|a| a.attempts_delta == 0)
    }
}

/// Deltas are `b - a`. Paths or artifacts present on one side only are
/// listed, not fatal.
pub fn compare_sessions(a: &MetricsReport, b: &MetricsReport) -> SessionComparison {
    let mut files = Vec::new();
    let mut only_in_a = Vec::new();
    let mut only_in_b = Vec::new();
    for (path, fa) in &a.files {
        match b.files.get(path) {
            Some(fb) => files.push(FileDelta {
                path: path.clone(),
                lines_a: fa.total_lines,
                lines_b: fb.total_lines,
                lines_delta: fb.total_lines as i64 - fa.total_lines as i64,
                density_a: fa.comment_density,
                density_b: fb.comment_density,
                density_delta: fb.comment_density - fa.comment_density,
                diverged: fa.hash != fb.hash,
            }),
            None => only_in_a.push(path.clone()),
        }
    }
    only_in_b.extend(b.files.keys().filter(|p| !a.files.contains_key(*p)).cloned());

    let mut artifacts = Vec::new();
    for (id, ma) in &a.artifacts {
        match b.artifacts.get(id) {
            Some(mb) => artifacts.push(ArtifactDelta {
                artifact: id.clone(),
                attempts_a: ma.attempts,
                attempts_b: mb.attempts,
                attempts_delta: mb.attempts as i64 - ma.attempts as i64,
            }),
            None => only_in_a.push(id.clone()),
        }
    }
    only_in_b.extend(b.artifacts.keys().filter(|id| !a.artifacts.contains_key(*id)).cloned());

    let diverged_files = files.iter().filter(|f| f.diverged).count();
    SessionComparison {
        files,
        artifacts,
        only_in_a,
        only_in_b,
        diverged_files,
    }
}
