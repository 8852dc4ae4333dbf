//! Session configuration and its defaults.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NativeScript;

/// Which feature set a session exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Comprehension assistance and expression builder only.
    Baseline,
    /// Baseline plus explorer, extractor and contextual review cards.
    #[serde(rename = "chatlearn", alias = "chat_learn")]
    ChatLearn,
}

impl Condition {
    pub fn learning_enabled(self) -> bool {
        matches!(self, Condition::ChatLearn)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Baseline => "baseline",
            Condition::ChatLearn => "chatlearn",
        })
    }
}

/// Human-readable language name as it appears inside prompts ("Chinese").
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(pub String);

impl Language {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_CONTEXT_WINDOW_TURNS: u32 = 6;
pub const DEFAULT_TOP_K: u32 = 3;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.15;
pub const DEFAULT_RECALL_TEST_SECONDS: u32 = 180;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub condition: Condition,
    /// Number of stored messages fed to every prompt as context.
    pub context_window_turns: u32,
    /// Minimum cosine similarity for a review card to be shown.
    pub similarity_threshold: f64,
    /// Maximum number of cards per trigger.
    pub top_k: u32,
    pub recall_test_seconds: u32,
    pub native_language: Language,
    pub target_language: Language,
    /// Keep captured expressions when the session closes. Off by default.
    pub persist_review_across_sessions: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            condition: Condition::ChatLearn,
            context_window_turns: DEFAULT_CONTEXT_WINDOW_TURNS,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            recall_test_seconds: DEFAULT_RECALL_TEST_SECONDS,
            native_language: Language::new("Chinese"),
            target_language: Language::new("English"),
            persist_review_across_sessions: false,
        }
    }
}

impl SessionConfig {
    pub fn with_condition(condition: Condition) -> Self {
        Self {
            condition,
            ..Self::default()
        }
    }

    /// Parses a JSON config, mapping any schema error to [`Error::InvalidConfig`].
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_window_turns == 0 {
            return Err(Error::InvalidConfig("context_window_turns must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be positive".into()));
        }
        if self.recall_test_seconds == 0 {
            return Err(Error::InvalidConfig("recall_test_seconds must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidConfig(format!(
                "similarity_threshold {} outside [-1, 1]",
                self.similarity_threshold
            )));
        }
        if self.native_language.as_str().trim().is_empty()
            || self.target_language.as_str().trim().is_empty()
        {
            return Err(Error::InvalidConfig("language names must not be empty".into()));
        }
        if NativeScript::for_language(&self.native_language).is_none() {
            return Err(Error::InvalidConfig(format!(
                "no script classifier for native language {}",
                self.native_language
            )));
        }
        Ok(())
    }

    pub fn native_script(&self) -> NativeScript {
        NativeScript::for_language(&self.native_language).unwrap_or(NativeScript::Han)
    }
}
