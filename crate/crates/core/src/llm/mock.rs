//! Deterministic scripted provider.
//!
//! A script is JSONL. Completion rules match a prompt when every string in
//! `contains` occurs in it; the first matching rule in file order answers.
//!
//! ```text
//! {"contains": ["User Message: 你好"], "reply": "{\"translated_text\": \"Hello\"}"}
//! {"contains": ["flaky"], "fail_first": 1, "reply": "ok"}
//! {"embed": "cuisine", "vector": {"0": 1.0}}
//! {"embed": "broken", "fail": true}
//! ```
//!
//! Texts without an `embed` override get a pseudo-random unit vector seeded by
//! a SHA-256 hash of the normalized text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{ChatProvider, DecodingParams, EmbeddingProvider, TransportError};
use crate::text::normalize_key;

pub const MOCK_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplyRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Number of matching calls that fail before the reply is served.
    #[serde(default)]
    pub fail_first: u32,
    /// Failures are reported as timeouts instead of unavailability.
    #[serde(default)]
    pub timeout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Dense(Vec<f64>),
    /// Axis index (as a string key) to value; unlisted axes are zero.
    Sparse(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRule {
    pub embed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<VectorSpec>,
    #[serde(default)]
    pub fail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptLine {
    Embed(EmbedRule),
    Reply(ReplyRule),
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: embedding override must have {MOCK_DIMENSION} components and a non-zero norm")]
    BadVector { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
pub struct MockProvider {
    rules: Vec<ReplyRule>,
    fired: Mutex<Vec<u32>>,
    embeddings: HashMap<String, Option<Vec<f64>>>,
    calls: Mutex<Vec<String>>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_lines(lines: impl IntoIterator<Item = ScriptLine>) -> Result<Self, ScriptError> {
        let mut mock = Self::new();
        for (i, line) in lines.into_iter().enumerate() {
            mock.push(line, i + 1)?;
        }
        Ok(mock)
    }

    pub fn parse(script: &str) -> Result<Self, ScriptError> {
        let mut mock = Self::new();
        for (i, raw) in script.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') || raw.starts_with("//") {
                continue;
            }
            let line: ScriptLine = serde_json::from_str(raw)
                .map_err(|source| ScriptError::Parse { line: i + 1, source })?;
            mock.push(line, i + 1)?;
        }
        Ok(mock)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn push(&mut self, line: ScriptLine, line_no: usize) -> Result<(), ScriptError> {
        match line {
            ScriptLine::Reply(rule) => {
                self.rules.push(rule);
                self.fired.get_mut().push(0);
            }
            ScriptLine::Embed(rule) => {
                let vector = match (rule.fail, rule.vector) {
                    (true, _) => None,
                    (false, None) => Some(hashed_unit_vector(&rule.embed)),
                    (false, Some(spec)) => Some(
                        spec_to_unit(spec).ok_or(ScriptError::BadVector { line: line_no })?,
                    ),
                };
                self.embeddings.insert(normalize_key(&rule.embed), vector);
            }
        }
        Ok(())
    }

    pub fn with_reply(mut self, contains: &[&str], reply: &str) -> Self {
        self.rules.push(ReplyRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.to_owned()),
            fail_first: 0,
            timeout: false,
        });
        self.fired.get_mut().push(0);
        self
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.calls.lock().clone()
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, TransportError> {
        self.calls.lock().push(prompt.to_owned());
        let idx = self
            .rules
            .iter()
            .position(|r| r.contains.iter().all(|c| prompt.contains(c.as_str())))
            .ok_or_else(|| TransportError::Unavailable("no scripted reply matches prompt".into()))?;
        let rule = &self.rules[idx];
        let mut fired = self.fired.lock();
        fired[idx] += 1;
        if fired[idx] <= rule.fail_first || rule.reply.is_none() {
            return Err(if rule.timeout {
                TransportError::Timeout
            } else {
                TransportError::Unavailable("scripted failure".into())
            });
        }
        Ok(rule.reply.clone().unwrap_or_default())
    }
}

impl EmbeddingProvider for MockProvider {
    fn dimension(&self) -> Option<usize> {
        Some(MOCK_DIMENSION)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        match self.embeddings.get(&normalize_key(text)) {
            Some(Some(v)) => Ok(v.clone()),
            Some(None) => Err(TransportError::Unavailable("scripted embedding failure".into())),
            None => Ok(hashed_unit_vector(text)),
        }
    }
}

fn spec_to_unit(spec: VectorSpec) -> Option<Vec<f64>> {
    let mut v = match spec {
        VectorSpec::Dense(v) if v.len() == MOCK_DIMENSION => v,
        VectorSpec::Dense(_) => return None,
        VectorSpec::Sparse(axes) => {
            let mut v = vec![0.0; MOCK_DIMENSION];
            for (axis, value) in axes {
                *v.get_mut(axis.parse::<usize>().ok()?)? = value;
            }
            v
        }
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Unit vector drawn from a ChaCha stream seeded by SHA-256 of the normalized text.
pub fn hashed_unit_vector(text: &str) -> Vec<f64> {
    let digest = Sha256::digest(normalize_key(text).as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let mut v: Vec<f64> = (0..MOCK_DIMENSION)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
