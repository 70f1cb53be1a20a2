use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use super::provider::{LlmProvider, LlmRequest, LlmResponse, ProviderError};
use super::template::{PromptTemplate, TemplateError, TemplateSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u32>,
}

impl GenerationConfig {
    pub fn greedy(model_name: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens,
            top_logprobs: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_top_logprobs(mut self, k: u32) -> Self {
        self.top_logprobs = Some(k);
        self
    }

    fn cacheable(&self) -> bool {
        self.temperature == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub template: String,
    pub model: String,
    pub prompt: String,
    pub completion: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub cache_hit: bool,
    #[serde(skip)]
    pub first_token_logprobs: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("provider failed after {attempts} attempts: {source}")]
    Exhausted {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Provider(ProviderError),
    #[error("completion {completion:?} matches none of {labels:?}")]
    Unparseable {
        completion: String,
        labels: Vec<String>,
        exchange: Box<LlmExchange>,
    },
    #[error("classify needs distinct, non-empty labels")]
    BadLabels,
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::ZERO,
        }
    }
}

/// Result of a verbalizer classification.
#[derive(Clone, Debug)]
pub struct Classification {
    pub label: String,
    /// Log-score per label, in label order.
    pub scores: Vec<(String, f64)>,
    pub exchange: LlmExchange,
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Provider-agnostic client: template rendering, temperature-0 caching,
/// retries, a concurrency bound and forward-pass accounting.
///
/// Cache entries follow "first write wins": a racing second writer gets the
/// already-committed value back.
pub struct LlmClient {
    provider: Arc<dyn LlmProvider>,
    templates: TemplateSet,
    retry: RetryPolicy,
    gate: Gate,
    memory: RwLock<HashMap<String, LlmResponse>>,
    cache_dir: Option<PathBuf>,
    forward_passes: AtomicU64,
}

pub const DEFAULT_CONCURRENCY: usize = 8;

impl LlmClient {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        Self {
            provider,
            templates: TemplateSet::default(),
            retry: RetryPolicy::default(),
            gate: Gate::new(DEFAULT_CONCURRENCY),
            memory: RwLock::new(HashMap::new()),
            cache_dir: None,
            forward_passes: AtomicU64::new(0),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.gate = Gate::new(n);
        self
    }

    /// Persist temperature-0 completions as `<dir>/<sha256>.json`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Non-cached exchanges served so far.
    pub fn forward_passes(&self) -> u64 {
        self.forward_passes.load(Ordering::SeqCst)
    }

    pub fn clear_memory_cache(&self) {
        self.memory.write().unwrap().clear();
    }

    pub fn complete(
        &self,
        template: &str,
        bindings: &[(&str, &str)],
        config: &GenerationConfig,
    ) -> Result<LlmExchange, LlmError> {
        let template = self.templates.get(template)?;
        self.complete_with(template, bindings, config)
    }

    pub fn complete_with(
        &self,
        template: &PromptTemplate,
        bindings: &[(&str, &str)],
        config: &GenerationConfig,
    ) -> Result<LlmExchange, LlmError> {
        let prompt = template.render(bindings)?;
        let request = LlmRequest {
            model: config.model_name.clone(),
            prompt,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            top_logprobs: config.top_logprobs,
        };
        let started = Instant::now();
        let key = config.cacheable().then(|| cache_key(&request));
        if let Some(hit) = key.as_deref().and_then(|k| self.lookup(k)) {
            return Ok(exchange(&template.name, request, hit, started, true));
        }

        let response = self.call_with_retry(&request)?;
        let response = match key {
            Some(k) => self.store(&k, response),
            None => response,
        };
        self.forward_passes.fetch_add(1, Ordering::SeqCst);
        Ok(exchange(&template.name, request, response, started, false))
    }

    /// Picks one of `labels` for the completion of `template`.
    ///
    /// With first-token log-scores available, the label whose first token
    /// scores highest wins. Otherwise the completion is scanned word by word
    /// and the first word equal to a label (ignoring case) wins.
    pub fn classify(
        &self,
        template: &str,
        bindings: &[(&str, &str)],
        labels: &[&str],
        config: &GenerationConfig,
    ) -> Result<Classification, LlmError> {
        let distinct: std::collections::HashSet<String> = labels.iter().map(|l| l.to_lowercase()).collect();
        if labels.is_empty() || distinct.len() != labels.len() || labels.iter().any(|l| l.trim().is_empty()) {
            return Err(LlmError::BadLabels);
        }
        let exchange = self.complete(template, bindings, config)?;
        if let Some(scores) = exchange
            .first_token_logprobs
            .as_deref()
            .and_then(|lp| score_labels(lp, labels))
        {
            let best = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap();
            return Ok(Classification {
                label: labels[best].to_string(),
                scores,
                exchange,
            });
        }
        match parse_label(&exchange.completion, labels) {
            Some(i) => Ok(Classification {
                label: labels[i].to_string(),
                scores: labels
                    .iter()
                    .enumerate()
                    .map(|(j, l)| (l.to_string(), if j == i { 0.0 } else { f64::NEG_INFINITY }))
                    .collect(),
                exchange,
            }),
            None => Err(LlmError::Unparseable {
                completion: exchange.completion.clone(),
                labels: labels.iter().map(|s| s.to_string()).collect(),
                exchange: Box::new(exchange),
            }),
        }
    }

    fn call_with_retry(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let _permit = self.gate.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.provider.generate(request) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt - 1);
                    warn!(attempt, error = %e, "provider call failed, retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) if e.is_retryable() => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt,
                        source: e,
                    })
                }
                Err(e) => return Err(LlmError::Provider(e)),
            }
        }
    }

    fn lookup(&self, key: &str) -> Option<LlmResponse> {
        if let Some(hit) = self.memory.read().unwrap().get(key) {
            return Some(hit.clone());
        }
        let path = self.cache_dir.as_ref()?.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<LlmResponse>(&text) {
            Ok(r) => {
                let mut mem = self.memory.write().unwrap();
                Some(mem.entry(key.to_string()).or_insert(r).clone())
            }
            Err(e) => {
                warn!(path = %path.display(), error = %e, "ignoring unreadable cache entry");
                None
            }
        }
    }

    fn store(&self, key: &str, response: LlmResponse) -> LlmResponse {
        let committed = {
            let mut mem = self.memory.write().unwrap();
            mem.entry(key.to_string()).or_insert(response).clone()
        };
        if let Some(dir) = &self.cache_dir {
            if let Err(e) = persist(dir, key, &committed) {
                warn!(error = %e, "could not persist cache entry");
            }
        }
        committed
    }
}

fn persist(dir: &std::path::Path, key: &str, response: &LlmResponse) -> std::io::Result<()> {
    let path = dir.join(format!("{key}.json"));
    if path.exists() {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer(&tmp, response)?;
    tmp.persist_noclobber(&path)
        .map(|_| ())
        .or_else(|e| if path.exists() { Ok(()) } else { Err(e.error) })
}

fn exchange(
    template: &str,
    request: LlmRequest,
    response: LlmResponse,
    started: Instant,
    cache_hit: bool,
) -> LlmExchange {
    let latency_ms = started.elapsed().as_millis() as u64;
    debug!(template, cache_hit, latency_ms, "llm exchange");
    LlmExchange {
        template: template.to_string(),
        model: request.model,
        prompt: request.prompt,
        completion: response.text,
        prompt_tokens: response.prompt_tokens,
        completion_tokens: response.completion_tokens,
        latency_ms,
        cache_hit,
        first_token_logprobs: response.first_token_logprobs,
    }
}

/// Hex SHA-256 over model, prompt, temperature and max_tokens.
pub fn cache_key(request: &LlmRequest) -> String {
    let mut h = Sha256::new();
    for part in [request.model.as_bytes(), request.prompt.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update(request.temperature.to_bits().to_le_bytes());
    h.update(request.max_tokens.to_le_bytes());
    hex::encode(h.finalize())
}

/// Per-label first-token score: the best log-score among candidate tokens
/// that are a non-empty prefix of the label (case-insensitive, whitespace
/// trimmed). `None` when no label is covered by any candidate.
fn score_labels(logprobs: &[(String, f64)], labels: &[&str]) -> Option<Vec<(String, f64)>> {
    let mut any = false;
    let scores = labels
        .iter()
        .map(|label| {
            let l = label.to_lowercase();
            let best = logprobs
                .iter()
                .filter(|(tok, _)| {
                    let t = tok.trim().to_lowercase();
                    !t.is_empty() && l.starts_with(&t)
                })
                .map(|(_, s)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            any |= best.is_finite();
            (label.to_string(), best)
        })
        .collect();
    any.then_some(scores)
}

fn parse_label(completion: &str, labels: &[&str]) -> Option<usize> {
    completion
        .split(|c: char| !c.is_alphanumeric() && c != '-' && c != '_')
        .filter(|w| !w.is_empty())
        .find_map(|w| labels.iter().position(|l| l.eq_ignore_ascii_case(w)))
}
