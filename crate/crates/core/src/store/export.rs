use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;

use super::{io_err, StoreError, EVENTS_FILE, METRICS_FILE, SESSION_FILE, TRANSCRIPT_FILE};
use crate::pipeline::SessionState;
use crate::spec::{PROJECT_FILE, STRUCTURE_FILE};

/// Writes a `.tar.gz` holding the session record, transcript, event feed,
/// metrics and every generated or reviewed file. Returns the archived
/// paths, workspace-relative.
pub fn export_session(
    root: &Path,
    state: &SessionState,
    archive: &Path,
) -> Result<Vec<String>, StoreError> {
    let mut entries: BTreeSet<String> = [
        SESSION_FILE,
        TRANSCRIPT_FILE,
        EVENTS_FILE,
        METRICS_FILE,
        PROJECT_FILE,
        STRUCTURE_FILE,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    entries.extend(state.artifacts.iter().map(|a| a.path.clone()));
    let present: Vec<String> = entries
        .into_iter()
        .filter(|p| root.join(p).is_file())
        .collect();

    let file = File::create(archive).map_err(io_err(archive))?;
    let mut tar = tar::Builder::new(GzEncoder::new(file, Compression::default()));
    for rel in &present {
        tar.append_path_with_name(root.join(rel), rel)
            .map_err(io_err(&root.join(rel)))?;
    }
    tar.into_inner()
        .and_then(|gz| gz.finish())
        .map_err(io_err(archive))?;
    Ok(present)
}
