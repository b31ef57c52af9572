//! Attempts and their append-only JSON-lines log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use signtutor_core::tutor::ReplayData;
use signtutor_core::{FusionDecision, Verdict};

use crate::recognize::{InputKind, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Queued,
    Processing,
    Done,
}

/// `verdict` is present exactly when `status` is `done`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub id: String,
    pub sign_id: String,
    pub input: InputKind,
    pub status: AttemptStatus,
    /// Unix milliseconds.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<FusionDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Attempt {
    pub fn new(id: String, sign_id: String, input: InputKind) -> Self {
        Self {
            id,
            sign_id,
            input,
            status: AttemptStatus::Queued,
            created_at: now_ms(),
            completed_at: None,
            verdict: None,
            decision: None,
            replay: None,
            diagnostic: None,
        }
    }

    pub fn complete(&mut self, outcome: Outcome) {
        self.status = AttemptStatus::Done;
        self.completed_at = Some(now_ms());
        self.verdict = Some(outcome.verdict);
        self.decision = outcome.decision;
        self.replay = outcome.replay;
        self.diagnostic = outcome.diagnostic;
    }
}

/// Every state change is appended as one line; on reopen the last line per
/// id wins.
#[derive(Debug)]
pub struct AttemptStore {
    path: Option<PathBuf>,
    file: Option<File>,
}

impl AttemptStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self { path: None, file: None }
    }

    /// Opens (creating if needed) the log and replays it.
    pub fn open(path: &Path) -> Result<(Self, HashMap<String, Attempt>)> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut attempts = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let a: Attempt = serde_json::from_str(&line)
                    .with_context(|| format!("{} line {}", path.display(), n + 1))?;
                attempts.insert(a.id.clone(), a);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok((
            Self {
                path: Some(path.to_path_buf()),
                file: Some(file),
            },
            attempts,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, attempt: &Attempt) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_string(attempt)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}
