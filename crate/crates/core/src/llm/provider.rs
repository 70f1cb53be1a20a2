use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One batch completion request as seen by a provider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_logprobs: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Log-scores of the candidate tokens at the first completion position,
    /// when the provider exposes them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_token_logprobs: Option<Vec<(String, f64)>>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited)
    }
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, request: &LlmRequest) -> Result<LlmResponse, ProviderError>;
}

/// Rough whitespace token count for providers that report none.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
