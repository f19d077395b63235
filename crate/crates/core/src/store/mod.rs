//! Session persistence under `.onx/`: the checkpoint record, the event
//! feed, the single-writer lock, metrics and export bundles.

mod events;
mod export;
mod lock;
mod metrics;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use events::{Event, EventKind, EventLog, read_events};
pub use export::export_session;
pub use lock::{LockError, WorkspaceLock};
pub use metrics::{
    compare_sessions, compute_metrics, count_lines, ArtifactMetrics, ArtifactDelta, FileDelta,
    FileMetrics, LineCounts, MetricsReport, SessionComparison, SessionMetrics,
};

use crate::pipeline::{ReviewStatus, SessionState};

pub const ONX_DIR: &str = ".onx";
pub const SESSION_FILE: &str = ".onx/session.json";
pub const TRANSCRIPT_FILE: &str = ".onx/transcript.jsonl";
pub const EVENTS_FILE: &str = ".onx/events.jsonl";
pub const METRICS_FILE: &str = ".onx/metrics.json";
pub const LOCK_FILE: &str = ".onx/lock";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no session in {} (run `plan` first)", .0.display())]
    NoSession(PathBuf),
    #[error(
        "session record {} is corrupt: {message}\n\
         hint: restore it from an export bundle, or remove .onx/ to start over"
    , path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error(
        "approved test file {path} was modified outside a checkpoint; approved tests are \
         immutable (restore the file, or wait for an abort and then `resume`)"
    )]
    ImmutabilityBreach { path: String },
    #[error("artifact file {path} is missing")]
    MissingArtifact { path: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `None` when the file does not exist.
pub fn hash_file(path: &Path) -> io::Result<Option<String>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(hash_bytes(&bytes))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

/// Writes via a temporary sibling and a rename, so readers and crashes
/// see either the old or the new content.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn session_exists(root: &Path) -> bool {
    root.join(SESSION_FILE).is_file()
}

pub fn save_checkpoint(root: &Path, state: &SessionState) -> Result<(), StoreError> {
    let path = root.join(SESSION_FILE);
    let json = serde_json::to_string_pretty(state).expect("session serializes");
    atomic_write(&path, json.as_bytes()).map_err(io_err(&path))
}

/// Reads the record without checking workspace files.
pub fn read_session(root: &Path) -> Result<SessionState, StoreError> {
    let path = root.join(SESSION_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::NoSession(root.to_path_buf()))
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        path,
        message: e.to_string(),
    })
}

/// Loads the session and reconciles it with the files on disk: edited
/// pending artifacts become `pending_modified`; an edited approved test is
/// an immutability breach unless the session is aborted (where edits are
/// the documented recovery path and `resume` picks them up).
pub fn load_session(root: &Path) -> Result<SessionState, StoreError> {
    let mut state = read_session(root)?;
    let aborted = state.phase.is_aborted();
    for artifact in &mut state.artifacts {
        if !artifact.kind.is_reviewable() || artifact.hash.is_none() {
            continue;
        }
        let path = root.join(&artifact.path);
        let current = hash_file(&path).map_err(io_err(&path))?;
        let Some(current) = current else {
            return Err(StoreError::MissingArtifact {
                path: artifact.path.clone(),
            });
        };
        if Some(&current) == artifact.hash.as_ref() {
            continue;
        }
        match artifact.review_status {
            ReviewStatus::Pending | ReviewStatus::PendingModified => {
                artifact.review_status = ReviewStatus::PendingModified;
            }
            _ if aborted => {}
            _ => {
                return Err(StoreError::ImmutabilityBreach {
                    path: artifact.path.clone(),
                })
            }
        }
    }
    Ok(state)
}
