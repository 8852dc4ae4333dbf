use crate::chat::{MessageId, SessionId};
use crate::llm::LlmError;
use crate::review::EntryId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} is closed")]
    SessionClosed(SessionId),
    #[error("session {0} is not in the expected state: {1}")]
    WrongState(SessionId, &'static str),
    #[error("session {0} has not finished")]
    SessionNotFinished(SessionId),
    #[error("text must not be empty")]
    EmptyText,
    #[error("unknown message {0}")]
    UnknownMessage(MessageId),
    #[error("message {0} was not sent by the expected participant")]
    WrongSender(MessageId),
    #[error("feature disabled: {0}")]
    FeatureDisabled(&'static str),
    #[error("selection {0:?} not found in message")]
    SelectionNotFound(String),
    #[error("unknown review entry {0}")]
    UnknownEntry(EntryId),
    #[error("review entry {0} was never triggered")]
    NeverTriggered(EntryId),
    #[error("review entry {0} has no un-interacted trigger left")]
    InteractionExhausted(EntryId),
    #[error("recall submission over time: {submitted}s > {budget}s")]
    OverTime { submitted: f64, budget: u32 },
    #[error("invalid recall submission: {0}")]
    InvalidSubmission(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("persistence: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record: {0}")]
    Corrupt(String),
}

impl Error {
    /// Short machine-readable code, used in protocol error frames.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::UnknownSession(_) => "unknown-session",
            Error::SessionClosed(_) => "session-closed",
            Error::WrongState(..) => "wrong-state",
            Error::SessionNotFinished(_) => "session-not-finished",
            Error::EmptyText => "empty-text",
            Error::UnknownMessage(_) => "unknown-message",
            Error::WrongSender(_) => "wrong-sender",
            Error::FeatureDisabled(_) => "feature-disabled",
            Error::SelectionNotFound(_) => "selection-not-found",
            Error::UnknownEntry(_) => "unknown-entry",
            Error::NeverTriggered(_) => "never-triggered",
            Error::InteractionExhausted(_) => "interaction-exhausted",
            Error::OverTime { .. } => "over-time",
            Error::InvalidSubmission(_) => "invalid-submission",
            Error::Llm(e) => e.code(),
            Error::Io(_) => "io",
            Error::Corrupt(_) => "corrupt",
        }
    }
}
