//! Text generation and classification over pluggable providers.

mod client;
mod http;
mod provider;
mod scripted;
mod template;

pub use client::{
    cache_key, Classification, GenerationConfig, LlmClient, LlmError, LlmExchange, RetryPolicy, DEFAULT_CONCURRENCY,
};
pub use http::{HttpProvider, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL, ENV_ORACLE_MODEL};
pub use provider::{LlmProvider, LlmRequest, LlmResponse, ProviderError};
pub use scripted::{Script, ScriptRule, ScriptedProvider};
pub use template::{PromptTemplate, TemplateError, TemplateSet, TEMPLATE_NAMES};

/// Pulls the body of the first fenced code block out of a completion.
pub fn first_fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}
