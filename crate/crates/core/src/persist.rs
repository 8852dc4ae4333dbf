//! On-disk session layout.
//!
//! ```text
//! <root>/<session id>/session.json    metadata, rewritten on state changes
//!                     messages.jsonl  one Message per line, append-only
//!                     events.jsonl    one LogEvent per line, append-only
//!                     review.jsonl    review store snapshot, rewritten
//!                     recall.json     recall result, once scored
//! ```
//!
//! Rewritten files go through a temp file and rename. A torn final line in an
//! append-only file (a write cut short by a crash) is dropped on load.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::chat::{Message, Session, SessionId};
use crate::error::{Error, Result};
use crate::metrics::{EventLog, LogEvent, RecallResult};
use crate::review::ReviewStore;

pub const SESSION_FILE: &str = "session.json";
pub const MESSAGES_FILE: &str = "messages.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const REVIEW_FILE: &str = "review.jsonl";
pub const RECALL_FILE: &str = "recall.json";

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)
}

fn append_line<T: Serialize>(file: &mut BufWriter<File>, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *file, value)?;
    file.write_all(b"\n")?;
    file.flush()
}

/// Open handles to one session directory.
#[derive(Debug)]
pub struct SessionFiles {
    dir: PathBuf,
    messages: BufWriter<File>,
    events: BufWriter<File>,
}

impl SessionFiles {
    pub fn create(root: &Path, id: SessionId) -> Result<Self> {
        let dir = root.join(id.to_string());
        fs::create_dir_all(&dir)?;
        Self::open(dir)
    }

    fn open(dir: PathBuf) -> Result<Self> {
        let open = |name: &str| -> std::io::Result<BufWriter<File>> {
            Ok(BufWriter::new(
                OpenOptions::new().create(true).append(true).open(dir.join(name))?,
            ))
        };
        Ok(Self {
            messages: open(MESSAGES_FILE)?,
            events: open(EVENTS_FILE)?,
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_message(&mut self, message: &Message) -> Result<()> {
        Ok(append_line(&mut self.messages, message)?)
    }

    pub fn append_event(&mut self, event: &LogEvent) -> Result<()> {
        Ok(append_line(&mut self.events, event)?)
    }

    pub fn write_session(&self, session: &Session) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(session).expect("session serializes");
        json.push(b'\n');
        Ok(write_atomic(&self.dir.join(SESSION_FILE), &json)?)
    }

    pub fn write_review(&self, store: &ReviewStore) -> Result<()> {
        Ok(write_atomic(&self.dir.join(REVIEW_FILE), store.to_jsonl().as_bytes())?)
    }

    pub fn write_recall(&self, recall: &RecallResult) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(recall).expect("recall serializes");
        json.push(b'\n');
        Ok(write_atomic(&self.dir.join(RECALL_FILE), &json)?)
    }
}

/// Everything recovered from a session directory.
#[derive(Debug)]
pub struct LoadedSession {
    pub session: Session,
    pub log: EventLog,
    pub review: ReviewStore,
    pub recall: Option<RecallResult>,
    pub files: SessionFiles,
}

/// Reads an append-only JSONL file, truncating a torn final line.
fn read_jsonl(path: &Path) -> Result<Vec<String>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        tracing::warn!(path = %path.display(), "dropping torn trailing record");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete.len() as u64)?;
    }
    Ok(complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .collect())
}

pub fn load_session(dir: &Path) -> Result<LoadedSession> {
    let meta = fs::read_to_string(dir.join(SESSION_FILE))?;
    let mut session: Session =
        serde_json::from_str(&meta).map_err(|e| Error::Corrupt(format!("session.json: {e}")))?;
    for line in read_jsonl(&dir.join(MESSAGES_FILE))? {
        let m: Message =
            serde_json::from_str(&line).map_err(|e| Error::Corrupt(format!("message: {e}")))?;
        session.restore(m)?;
    }
    let mut log = EventLog::new();
    for line in read_jsonl(&dir.join(EVENTS_FILE))? {
        let e: LogEvent =
            serde_json::from_str(&line).map_err(|e| Error::Corrupt(format!("event: {e}")))?;
        log.restore(e)?;
    }
    let review = match fs::read_to_string(dir.join(REVIEW_FILE)) {
        Ok(t) => ReviewStore::from_jsonl(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => ReviewStore::new(),
        Err(e) => return Err(e.into()),
    };
    let recall = match fs::read_to_string(dir.join(RECALL_FILE)) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(|e| Error::Corrupt(format!("recall: {e}")))?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok(LoadedSession {
        session,
        log,
        review,
        recall,
        files: SessionFiles::open(dir.to_owned())?,
    })
}

/// Session directories under `root`, ordered by id.
pub fn session_dirs(root: &Path) -> Result<Vec<(SessionId, PathBuf)>> {
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        let path = entry.path();
        let Some(id) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if path.join(SESSION_FILE).is_file() {
            out.push((SessionId(id), path));
        }
    }
    out.sort();
    Ok(out)
}
