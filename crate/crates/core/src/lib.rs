//! Core engine for a two-party learning chat.
//!
//! A non-native speaker (NNS) chats with a native speaker (NS). The engine
//! provides translation assistance in both directions and, when a session runs
//! under [`Condition::ChatLearn`], turns comprehension and expression
//! difficulties into captured expressions that resurface later as contextual
//! review cards. Every user-visible behavior is written to an append-only event
//! log from which the session metrics are folded.
//!
//! The main entry point is [`ChatLearn`], which owns sessions and routes every
//! operation through an [`llm::Gateway`].

pub mod assist;
pub mod chat;
pub mod clock;
pub mod config;
mod engine;
mod error;
pub mod llm;
pub mod metrics;
pub mod persist;
pub mod review;
pub mod text;

pub use assist::{BuildOutcome, Explanation, ExtractionMapping, TranslationDirection, TranslationResult};
pub use chat::{Message, MessageId, Sender, Session, SessionId, SessionState};
pub use clock::{Clock, StepClock, SystemClock};
pub use config::{Condition, Language, SessionConfig};
pub use engine::ChatLearn;
pub use error::{Error, Result};
pub use metrics::{LogEvent, MetricsReport, RecallResult, RecallSubmission};
pub use review::{CaptureSource, EntryId, ExpressionEntry, ReviewCard, TriggerKind};
