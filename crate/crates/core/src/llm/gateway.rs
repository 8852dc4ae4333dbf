use std::sync::{Arc, OnceLock};
use std::time::Instant;

use parking_lot::{Condvar, Mutex};
use serde_json::Value;

use super::json;
use super::provider::{
    ChatProvider, DecodingParams, EmbeddingProvider, EmbeddingVector, OutputFormat,
    TransportError,
};
use super::LlmError;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse {
    pub raw_text: String,
    /// Present iff `raw_text` contains JSON matching the declared format.
    pub parsed: Option<Value>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub params: DecodingParams,
    pub max_in_flight: usize,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            params: DecodingParams::default(),
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock();
        while *n == 0 {
            self.freed.wait(&mut n);
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock() += 1;
        self.0.freed.notify_one();
    }
}

/// Shared front door to the chat and embedding providers.
pub struct Gateway {
    chat: Arc<dyn ChatProvider>,
    embedder: Arc<dyn EmbeddingProvider>,
    options: GatewayOptions,
    limiter: Limiter,
    dimension: OnceLock<usize>,
}

impl Gateway {
    pub fn new(
        chat: Arc<dyn ChatProvider>,
        embedder: Arc<dyn EmbeddingProvider>,
        options: GatewayOptions,
    ) -> Self {
        let dimension = OnceLock::new();
        if let Some(d) = embedder.dimension() {
            let _ = dimension.set(d);
        }
        Self {
            chat,
            embedder,
            limiter: Limiter::new(options.max_in_flight),
            options,
            dimension,
        }
    }

    /// Gateway whose chat and embedding sides are the same provider.
    pub fn single<P>(provider: Arc<P>, options: GatewayOptions) -> Self
    where
        P: ChatProvider + EmbeddingProvider + 'static,
    {
        Self::new(provider.clone(), provider, options)
    }

    pub fn params(&self) -> &DecodingParams {
        &self.options.params
    }

    fn with_retry<T>(&self, mut call: impl FnMut() -> Result<T, TransportError>) -> Result<T, LlmError> {
        let _permit = self.limiter.acquire();
        let mut last = None;
        for attempt in 0..2 {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "provider call failed");
                    last = Some(e);
                }
            }
        }
        Err(match last {
            Some(TransportError::Timeout) => LlmError::Timeout,
            Some(TransportError::Unavailable(m)) => LlmError::ProviderUnavailable(m),
            None => unreachable!(),
        })
    }

    /// Sends a prompt; transport failures are retried once.
    pub fn complete(&self, prompt: &str, format: OutputFormat) -> Result<ProviderResponse, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let raw_text = self.with_retry(|| self.chat.complete(prompt, &self.options.params))?;
        let parsed = match format {
            OutputFormat::PlainText => None,
            OutputFormat::TranslatedText => json::first_object(&raw_text)
                .filter(|v| v.get("translated_text").is_some_and(Value::is_string)),
            OutputFormat::StringList => json::first_array(&raw_text)
                .filter(|v| v.as_array().is_some_and(|a| a.iter().all(Value::is_string))),
        };
        Ok(ProviderResponse {
            raw_text,
            parsed,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyText);
        }
        let values = self.with_retry(|| self.embedder.embed(text))?;
        let expected = *self.dimension.get_or_init(|| values.len());
        if values.len() != expected || expected == 0 {
            return Err(LlmError::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(EmbeddingVector(values))
    }

    /// Embeds many texts, in parallel when the `parallel` feature is on.
    pub fn embed_batch(&self, texts: &[&str]) -> Vec<Result<EmbeddingVector, LlmError>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            texts.par_iter().map(|t| self.embed(t)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            texts.iter().map(|t| self.embed(t)).collect()
        }
    }
}
