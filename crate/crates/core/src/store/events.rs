use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::terminate_torn_line;
use crate::pipeline::{AbortReport, Phase, Verdict};
use crate::prompt::TemplateId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        session_id: String,
    },
    PhaseChanged {
        from: Phase,
        to: Phase,
    },
    CheckpointOpened {
        artifact: String,
        path: String,
    },
    ArtifactEdited {
        artifact: String,
    },
    Approved {
        artifact: String,
        modified: bool,
    },
    InterventionRecorded {
        artifact: String,
    },
    ProviderCall {
        seq: u64,
        artifact: String,
        round: u32,
        attempt: u32,
        template: TemplateId,
    },
    AttemptResult {
        artifact: String,
        round: u32,
        attempt: u32,
        verdict: Verdict,
        summary: String,
    },
    GateResult {
        passed: bool,
        summary: String,
    },
    Aborted {
        report: AbortReport,
    },
    Resumed {
        phase: Phase,
    },
    Completed,
    /// Result of a queued control command (`StepOutcome` or an error
    /// object).
    StepCompleted {
        command_id: u64,
        outcome: serde_json::Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Zero-based position in the feed.
    pub cursor: u64,
    /// Session revision current when the event was written.
    #[serde(default)]
    pub revision: u64,
    pub time: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Append-only event feed in `.onx/events.jsonl`.
pub struct EventLog {
    path: PathBuf,
    file: File,
    next: u64,
}

impl EventLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let next = read_events(path, 0)?.last().map(|e| e.cursor + 1).unwrap_or(0);
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        terminate_torn_line(path, &mut file)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, revision: u64, kind: EventKind) -> io::Result<u64> {
        let event = Event {
            cursor: self.next,
            revision,
            time: Utc::now(),
            kind,
        };
        let line = serde_json::to_string(&event).expect("event serializes");
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        self.next += 1;
        Ok(event.cursor)
    }
}

/// Events with `cursor >= from`; a missing file reads as empty.
pub fn read_events(path: &Path, from: u64) -> io::Result<Vec<Event>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        if let Ok(event) = serde_json::from_str::<Event>(&line?) {
            if event.cursor >= from {
                out.push(event);
            }
        }
    }
    Ok(out)
}
