//! Prompt rendering and the provider gateway.

mod gateway;
pub mod http;
pub mod json;
pub mod mock;
mod provider;
pub mod template;

pub use gateway::{Gateway, GatewayOptions, ProviderResponse};
pub use provider::{
    ChatProvider, DecodingParams, EmbeddingProvider, EmbeddingVector, OutputFormat,
    TransportError,
};
pub use template::{Bindings, Placeholder, PromptTemplate, TemplateName};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("template {template} is missing a binding for {placeholder}")]
    MissingPlaceholder {
        template: TemplateName,
        placeholder: Placeholder,
    },
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("text to embed must not be empty")]
    EmptyText,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider timed out")]
    Timeout,
    #[error("embedding dimension {got} does not match provider dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::MissingPlaceholder { .. } => "missing-placeholder",
            LlmError::EmptyPrompt => "empty-prompt",
            LlmError::EmptyText => "empty-text",
            LlmError::ProviderUnavailable(_) => "provider-unavailable",
            LlmError::Timeout => "timeout",
            LlmError::DimensionMismatch { .. } => "dimension-mismatch",
        }
    }
}
