//! Sessions, participants and message history.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sender {
    /// Non-native speaker, the learner.
    #[serde(rename = "NNS")]
    Nns,
    /// Native speaker.
    #[serde(rename = "NS")]
    Ns,
    System,
}

impl Sender {
    pub fn label(self) -> &'static str {
        match self {
            Sender::Nns => "NNS",
            Sender::Ns => "NS",
            Sender::System => "System",
        }
    }
}

/// One chat turn. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub session_id: SessionId,
    pub sender: Sender,
    pub original_text: String,
    /// Target-language text delivered in place of the original, when the
    /// sender composed the message through the expression builder.
    pub shown_translation: Option<String>,
    pub sent_at: i64,
    pub token_count: u32,
}

impl Message {
    /// What the other participant actually reads.
    pub fn delivered_text(&self) -> &str {
        self.shown_translation.as_deref().unwrap_or(&self.original_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    RecallTest,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub config: SessionConfig,
    /// Shared token both participants use to join.
    pub token: Option<String>,
    pub state: SessionState,
    pub created_at: i64,
    /// Set when the recall test begins.
    pub recall_started_at: Option<i64>,
    #[serde(skip)]
    pub messages: Vec<Message>,
}

impl Session {
    pub fn new(id: SessionId, config: SessionConfig, token: Option<String>, now: i64) -> Self {
        Self {
            id,
            config,
            token,
            state: SessionState::Active,
            created_at: now,
            recall_started_at: None,
            messages: Vec::new(),
        }
    }

    pub fn append(
        &mut self,
        sender: Sender,
        text: &str,
        shown_translation: Option<String>,
        now: i64,
    ) -> Result<Message> {
        if self.state != SessionState::Active {
            return Err(Error::SessionClosed(self.id));
        }
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let id = MessageId(self.messages.last().map_or(0, |m| m.id.0) + 1);
        let message = Message {
            id,
            session_id: self.id,
            sender,
            original_text: text.to_owned(),
            shown_translation: shown_translation.filter(|t| !t.trim().is_empty()),
            sent_at: now,
            token_count: text::token_count(text, self.config.native_script()),
        };
        self.messages.push(message.clone());
        Ok(message)
    }

    /// Restores a message read back from disk.
    pub(crate) fn restore(&mut self, message: Message) -> Result<()> {
        let expected = self.messages.last().map_or(0, |m| m.id.0) + 1;
        if message.id.0 != expected || message.session_id != self.id {
            return Err(Error::Corrupt(format!(
                "message {} out of sequence in session {}",
                message.id, self.id
            )));
        }
        self.messages.push(message);
        Ok(())
    }

    /// The most recent `context_window_turns` messages, oldest first.
    pub fn history_window(&self) -> &[Message] {
        let n = self.config.context_window_turns as usize;
        let start = self.messages.len().saturating_sub(n);
        &self.messages[start..]
    }

    pub fn message(&self, id: MessageId) -> Option<&Message> {
        // ids are 1-based and gap-free
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.messages.get(idx)
    }

    pub fn begin_recall(&mut self, now: i64) -> Result<()> {
        if self.state != SessionState::Active {
            return Err(Error::WrongState(self.id, "active"));
        }
        self.state = SessionState::RecallTest;
        self.recall_started_at = Some(now);
        Ok(())
    }

    pub fn close(&mut self) {
        self.state = SessionState::Closed;
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SessionState::RecallTest | SessionState::Closed)
    }
}

/// Renders messages as `role: text` lines for prompt context.
pub fn render_context(messages: &[Message]) -> String {
    messages
        .iter()
        .map(|m| format!("{}: {}", m.sender.label(), m.original_text))
        .collect::<Vec<_>>()
        .join("\n")
}
