//! Client for OpenAI-compatible `chat/completions` and `embeddings` endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::provider::{ChatProvider, DecodingParams, EmbeddingProvider, TransportError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(15);

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpSettings {
    /// Reads `LLM_BASE_URL`, `LLM_CHAT_MODEL`, `LLM_EMBED_MODEL` and `LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Some(Self {
            base_url: var("LLM_BASE_URL")?,
            chat_model: var("LLM_CHAT_MODEL")?,
            embed_model: var("LLM_EMBED_MODEL")?,
            api_key: var("LLM_API_KEY"),
            timeout: DEFAULT_TIMEOUT,
        })
    }
}

pub struct HttpProvider {
    settings: HttpSettings,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(settings: HttpSettings) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        Ok(Self { settings, client })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.base_url.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(map_reqwest)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Unavailable(format!("HTTP {status}")));
        }
        resp.json().map_err(map_reqwest)
    }
}

fn map_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Unavailable(e.to_string())
    }
}

/// Request body for a single-turn chat completion.
pub fn chat_request(model: &str, prompt: &str, params: &DecodingParams) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": prompt }],
        "temperature": params.temperature,
        "top_p": params.top_p,
    });
    if let Some(n) = params.max_tokens {
        body["max_tokens"] = json!(n);
    }
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    body
}

pub fn parse_chat_response(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")?
        .as_str()
        .map(str::to_owned)
}

pub fn parse_embedding_response(body: &Value) -> Option<Vec<f64>> {
    body.pointer("/data/0/embedding")?
        .as_array()?
        .iter()
        .map(Value::as_f64)
        .collect()
}

impl ChatProvider for HttpProvider {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, TransportError> {
        let body = self.post(
            "chat/completions",
            &chat_request(&self.settings.chat_model, prompt, params),
        )?;
        parse_chat_response(&body)
            .ok_or_else(|| TransportError::Unavailable("malformed chat completion".into()))
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dimension(&self) -> Option<usize> {
        None
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        let body = self.post(
            "embeddings",
            &json!({ "model": self.settings.embed_model, "input": text }),
        )?;
        parse_embedding_response(&body)
            .ok_or_else(|| TransportError::Unavailable("malformed embedding response".into()))
    }
}
