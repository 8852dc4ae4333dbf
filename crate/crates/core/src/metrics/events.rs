use serde::{Deserialize, Serialize};

use crate::chat::{MessageId, Sender, SessionId};
use crate::error::{Error, Result};
use crate::review::{CaptureSource, EntryId, TriggerKind};

/// Payload of a logged behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    MessageSent {
        message_id: MessageId,
        sender: Sender,
        token_count: u32,
    },
    FullComprehension {
        message_id: MessageId,
        cached: bool,
        translated_text: String,
        context_used: Vec<MessageId>,
    },
    PartialComprehension {
        message_id: MessageId,
        selection: String,
        explanation: String,
    },
    ExpressionSupport {
        draft: String,
        translated_text: String,
        l1_tokens: u32,
        total_tokens: u32,
        extracted: bool,
    },
    Capture {
        entry_id: EntryId,
        surface_text: String,
        source: CaptureSource,
        new_entry: bool,
    },
    CardTriggered {
        entry_id: EntryId,
        trigger: TriggerKind,
        similarity: f64,
    },
    CardInteraction {
        entry_id: EntryId,
    },
    /// A feature fell back to a reduced result. Not counted by any metric.
    Degradation {
        operation: String,
        stage: Option<String>,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MessageSent,
    FullComprehension,
    PartialComprehension,
    ExpressionSupport,
    Capture,
    CardTriggered,
    CardInteraction,
    Degradation,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::MessageSent { .. } => EventKind::MessageSent,
            Event::FullComprehension { .. } => EventKind::FullComprehension,
            Event::PartialComprehension { .. } => EventKind::PartialComprehension,
            Event::ExpressionSupport { .. } => EventKind::ExpressionSupport,
            Event::Capture { .. } => EventKind::Capture,
            Event::CardTriggered { .. } => EventKind::CardTriggered,
            Event::CardInteraction { .. } => EventKind::CardInteraction,
            Event::Degradation { .. } => EventKind::Degradation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub seq: u64,
    pub session_id: SessionId,
    #[serde(flatten)]
    pub event: Event,
    pub at: i64,
}

/// Append-only per-session log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<LogEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, session_id: SessionId, event: Event, at: i64) -> LogEvent {
        let seq = self.events.last().map_or(0, |e| e.seq) + 1;
        let record = LogEvent {
            seq,
            session_id,
            event,
            at,
        };
        self.events.push(record.clone());
        record
    }

    /// Restores a record read back from disk, enforcing sequence order.
    pub fn restore(&mut self, record: LogEvent) -> Result<()> {
        let expected = self.events.last().map_or(0, |e| e.seq) + 1;
        if record.seq != expected {
            return Err(Error::Corrupt(format!(
                "event seq {} where {expected} expected",
                record.seq
            )));
        }
        self.events.push(record);
        Ok(())
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut log = Self::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let record = serde_json::from_str(line).map_err(|e| Error::Corrupt(e.to_string()))?;
            log.restore(record)?;
        }
        Ok(log)
    }
}
