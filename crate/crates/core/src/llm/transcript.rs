use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::prompt::TemplateId;

/// One completed provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub phase: String,
    pub artifact: String,
    pub round: u32,
    pub attempt: u32,
    pub template: TemplateId,
    pub system: String,
    pub prompt: String,
    pub response: String,
    pub provider: String,
    pub model: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub transport_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

/// Append-only JSON-lines log. Sequence numbers continue from the highest
/// one already in the file, so records written by an interrupted run are
/// never reused.
pub struct Transcript {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl Transcript {
    pub fn open(path: &Path) -> io::Result<Self> {
        let last = read_transcript(path, 0)?.last().map(|r| r.seq).unwrap_or(0);
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        terminate_torn_line(path, &mut file)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next_seq: last + 1,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Assigns the sequence number and appends.
    pub fn append(&mut self, mut record: TranscriptRecord) -> io::Result<u64> {
        record.seq = self.next_seq;
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        self.file.sync_data()?;
        self.next_seq += 1;
        Ok(record.seq)
    }
}

pub(crate) fn terminate_torn_line(path: &Path, file: &mut File) -> io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|b| *b != b'\n') {
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Records with `seq >= from`; a missing file reads as empty. A torn final
/// line (crash mid-write) is skipped.
pub fn read_transcript(path: &Path, from: u64) -> io::Result<Vec<TranscriptRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if let Ok(record) = serde_json::from_str::<TranscriptRecord>(&line) {
            if record.seq >= from {
                out.push(record);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> TranscriptRecord {
        TranscriptRecord {
            seq: 0,
            timestamp: Utc::now(),
            phase: "structure".into(),
            artifact: "structure".into(),
            round: 1,
            attempt: 1,
            template: TemplateId::StructureGen,
            system: "s".into(),
            prompt: "p".into(),
            response: "r".into(),
            provider: "replay".into(),
            model: "replay".into(),
            latency_ms: 0,
            transport_retries: 0,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    #[test]
    fn sequence_continues_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = Transcript::open(&path).unwrap();
        assert_eq!(t.append(record()).unwrap(), 1);
        assert_eq!(t.append(record()).unwrap(), 2);
        drop(t);
        let mut t = Transcript::open(&path).unwrap();
        assert_eq!(t.append(record()).unwrap(), 3);
        let all = read_transcript(&path, 0).unwrap();
        assert_eq!(all.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(read_transcript(&path, 2).unwrap().len(), 2);
    }

    #[test]
    fn torn_line_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = Transcript::open(&path).unwrap();
        t.append(record()).unwrap();
        drop(t);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\": 2, \"trunc").unwrap();
        assert_eq!(read_transcript(&path, 0).unwrap().len(), 1);
        let mut t = Transcript::open(&path).unwrap();
        assert_eq!(t.append(record()).unwrap(), 2);
        assert_eq!(read_transcript(&path, 0).unwrap().len(), 2);
    }
}
