use serde::{Deserialize, Serialize};

/// Decoding parameters forwarded to the chat provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: None,
            seed: Some(0),
        }
    }
}

/// The output contract a prompt declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    PlainText,
    /// `{"translated_text": "..."}`
    TranslatedText,
    /// `["...", "..."]`
    StringList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Unavailable(String),
    Timeout,
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Unavailable(m) => write!(f, "unavailable: {m}"),
            TransportError::Timeout => f.write_str("timeout"),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, TransportError>;
}

pub trait EmbeddingProvider: Send + Sync {
    /// Dimension of produced vectors, when known up front.
    fn dimension(&self) -> Option<usize>;
    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}
