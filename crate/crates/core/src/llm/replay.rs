use std::collections::{HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CallKey, ChatRequest, Completion, Provider, ProviderError, ProviderKind};
use crate::prompt::TemplateId;

pub const FIXTURE_FILE: &str = "fixture.jsonl";

/// One recorded exchange. Fixtures are JSON lines of these, in call order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(default)]
    pub seq: u64,
    pub phase: String,
    pub artifact: String,
    #[serde(default = "one")]
    pub round: u32,
    pub attempt: u32,
    pub template: TemplateId,
    /// Occurrence index among records with the same key.
    #[serde(default)]
    pub sub_index: u32,
    #[serde(default)]
    pub system: String,
    #[serde(default)]
    pub prompt: String,
    pub response: String,
    #[serde(default)]
    pub provider: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub latency_ms: u64,
}

fn one() -> u32 {
    1
}

impl FixtureRecord {
    pub fn key(&self) -> CallKey {
        CallKey {
            phase: self.phase.clone(),
            artifact: self.artifact.clone(),
            round: self.round,
            attempt: self.attempt,
            template: self.template,
        }
    }
}

/// A fixture may be named by its file or by a directory holding
/// `fixture.jsonl`.
pub fn fixture_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(FIXTURE_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_fixture(path: &Path) -> Result<Vec<FixtureRecord>, ProviderError> {
    let file = fixture_file(path);
    let reader = BufReader::new(File::open(&file)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| ProviderError::Fixture {
            path: file.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serves recorded responses by key; repeated keys are consumed in file
/// order. Never touches the network.
pub struct ReplayProvider {
    pending: Mutex<HashMap<CallKey, VecDeque<FixtureRecord>>>,
}

impl ReplayProvider {
    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        Ok(Self::from_records(read_fixture(path)?))
    }

    pub fn from_records(records: Vec<FixtureRecord>) -> Self {
        let mut pending: HashMap<CallKey, VecDeque<FixtureRecord>> = HashMap::new();
        for r in records {
            pending.entry(r.key()).or_default().push_back(r);
        }
        Self {
            pending: Mutex::new(pending),
        }
    }
}

impl Provider for ReplayProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Replay
    }

    fn model(&self) -> &str {
        "replay"
    }

    fn complete(&self, key: &CallKey, _request: &ChatRequest) -> Result<Completion, ProviderError> {
        let mut pending = self.pending.lock().expect("replay lock");
        let record = pending
            .get_mut(key)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| ProviderError::ReplayMiss(key.clone()))?;
        Ok(Completion {
            text: record.response,
            latency_ms: record.latency_ms,
            prompt_tokens: None,
            completion_tokens: None,
            transport_retries: 0,
        })
    }
}

struct RecorderState {
    file: File,
    counts: HashMap<CallKey, u32>,
    next_seq: u64,
}

/// Wraps a provider and appends every successful exchange to a fixture.
pub struct RecordingProvider {
    inner: Box<dyn Provider>,
    state: Mutex<RecorderState>,
}

impl RecordingProvider {
    pub fn new(inner: Box<dyn Provider>, path: &Path) -> Result<Self, ProviderError> {
        let file_path = fixture_file(path);
        if let Some(parent) = file_path.parent() {
            fs::create_dir_all(parent)?;
        }
        let existing = if file_path.exists() {
            read_fixture(&file_path)?
        } else {
            Vec::new()
        };
        let mut counts: HashMap<CallKey, u32> = HashMap::new();
        for r in &existing {
            *counts.entry(r.key()).or_default() += 1;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&file_path)?;
        Ok(Self {
            inner,
            state: Mutex::new(RecorderState {
                file,
                counts,
                next_seq: existing.len() as u64 + 1,
            }),
        })
    }
}

impl Provider for RecordingProvider {
    fn kind(&self) -> ProviderKind {
        self.inner.kind()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<Completion, ProviderError> {
        let completion = self.inner.complete(key, request)?;
        let mut state = self.state.lock().expect("recorder lock");
        let sub_index = {
            let n = state.counts.entry(key.clone()).or_default();
            *n += 1;
            *n - 1
        };
        let record = FixtureRecord {
            seq: state.next_seq,
            phase: key.phase.clone(),
            artifact: key.artifact.clone(),
            round: key.round,
            attempt: key.attempt,
            template: key.template,
            sub_index,
            system: request.system.clone(),
            prompt: request.user.clone(),
            response: completion.text.clone(),
            provider: self.inner.kind().to_string(),
            model: self.inner.model().to_string(),
            latency_ms: completion.latency_ms,
        };
        state.next_seq += 1;
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(state.file, "{line}")?;
        state.file.flush()?;
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(artifact: &str, attempt: u32) -> CallKey {
        CallKey {
            phase: "class_generation".into(),
            artifact: artifact.into(),
            round: 1,
            attempt,
            template: TemplateId::ClassCodeGen,
        }
    }

    fn req() -> ChatRequest {
        ChatRequest {
            system: "s".into(),
            user: "u".into(),
        }
    }

    struct Canned(Mutex<Vec<&'static str>>);
    impl Provider for Canned {
        fn kind(&self) -> ProviderKind {
            ProviderKind::OpenaiCompatible
        }
        fn model(&self) -> &str {
            "canned"
        }
        fn complete(&self, _: &CallKey, _: &ChatRequest) -> Result<Completion, ProviderError> {
            let text = self.0.lock().unwrap().remove(0).to_string();
            Ok(Completion {
                text,
                latency_ms: 7,
                prompt_tokens: None,
                completion_tokens: None,
                transport_retries: 0,
            })
        }
    }

    #[test]
    fn replay_lookup_and_miss() {
        let r = ReplayProvider::from_records(vec![FixtureRecord {
            seq: 1,
            phase: "class_generation".into(),
            artifact: "class_code:bib.EntryStore".into(),
            round: 1,
            attempt: 1,
            template: TemplateId::ClassCodeGen,
            sub_index: 0,
            system: String::new(),
            prompt: String::new(),
            response: "stored".into(),
            provider: "openai-compatible".into(),
            model: "m".into(),
            latency_ms: 12,
        }]);
        let got = r.complete(&key("class_code:bib.EntryStore", 1), &req()).unwrap();
        assert_eq!(got.text, "stored");
        assert_eq!(got.latency_ms, 12);
        let miss = r.complete(&key("class_code:bib.EntryStore", 1), &req()).unwrap_err();
        assert!(matches!(miss, ProviderError::ReplayMiss(ref k) if k.attempt == 1));
        assert!(miss.to_string().contains("artifact=class_code:bib.EntryStore"));
    }

    #[test]
    fn record_then_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        let canned = Canned(Mutex::new(vec!["one", "two", "three"]));
        let rec = RecordingProvider::new(Box::new(canned), &path).unwrap();
        rec.complete(&key("a", 1), &req()).unwrap();
        rec.complete(&key("a", 2), &req()).unwrap();
        // same key twice: second gets sub_index 1
        rec.complete(&key("a", 1), &req()).unwrap();
        drop(rec);
        let records = read_fixture(&path).unwrap();
        assert_eq!(records.iter().map(|r| r.sub_index).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert_eq!(records.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![1, 2, 3]);

        let replay = ReplayProvider::open(&path).unwrap();
        let got: Vec<String> = [key("a", 1), key("a", 2), key("a", 1)]
            .iter()
            .map(|k| replay.complete(k, &req()).unwrap().text)
            .collect();
        assert_eq!(got, vec!["one", "two", "three"]);
    }

    #[test]
    fn empty_fixture_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FIXTURE_FILE);
        fs::write(&path, "").unwrap();
        let replay = ReplayProvider::open(dir.path()).unwrap();
        assert!(matches!(
            replay.complete(&key("a", 1), &req()),
            Err(ProviderError::ReplayMiss(_))
        ));
    }

    #[test]
    fn bad_fixture_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        fs::write(&path, "\n{\"nope\": 1}\n").unwrap();
        match ReplayProvider::open(&path) {
            Err(ProviderError::Fixture { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected fixture error, got {:?}", other.err()),
        }
    }
}
