//! Chat-completions wire format over plain HTTP.

use std::time::Duration;

use serde_json::{json, Value};

use super::provider::{LlmProvider, LlmRequest, LlmResponse, ProviderError};

pub const ENV_BASE_URL: &str = "CP_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "CP_LLM_API_KEY";
pub const ENV_MODEL: &str = "CP_LLM_MODEL";
pub const ENV_ORACLE_MODEL: &str = "CP_ORACLE_MODEL";

pub struct HttpProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent: config.into(),
        }
    }

    /// Reads `CP_LLM_BASE_URL` and `CP_LLM_API_KEY`. Returns `None` when no
    /// base URL is configured.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_BASE_URL).ok().filter(|s| !s.is_empty())?;
        Some(Self::new(base, std::env::var(ENV_API_KEY).ok()))
    }

    fn body(request: &LlmRequest) -> Value {
        let mut body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(k) = request.top_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(k);
        }
        body
    }
}

pub(crate) fn parse_chat_completion(v: &Value) -> Result<LlmResponse, ProviderError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProviderError::Malformed("missing choices[0]".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("missing message.content".into()))?
        .to_string();
    let first_token_logprobs = choice
        .pointer("/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
        .map(|tops| {
            tops.iter()
                .filter_map(|t| Some((t.get("token")?.as_str()?.to_string(), t.get("logprob")?.as_f64()?)))
                .collect::<Vec<_>>()
        })
        .filter(|v| !v.is_empty());
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64);
    Ok(LlmResponse {
        prompt_tokens: usage("prompt_tokens").unwrap_or(0),
        completion_tokens: usage("completion_tokens").unwrap_or_else(|| super::provider::approx_tokens(&text)),
        text,
        first_token_logprobs,
    })
}

impl LlmProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, request: &LlmRequest) -> Result<LlmResponse, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(Self::body(request))
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            return Err(ProviderError::RateLimited);
        }
        if status >= 500 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if status >= 400 {
            return Err(ProviderError::Malformed(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        parse_chat_completion(&v)
    }
}
