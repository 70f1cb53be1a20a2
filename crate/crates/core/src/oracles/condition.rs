use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::warn;

use crate::engine::{Scene, Tri};
use crate::llm::{GenerationConfig, LlmClient, LlmError};

pub const CONDITION_LABELS: [&str; 3] = ["yes", "no", "unknown"];
pub const ENV_REMOTE_CHECKER_URL: &str = "CP_REMOTE_CHECKER_URL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Llm,
    Table,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub verdict: Tri,
    pub source: VerdictSource,
    /// The verbalizer that produced the verdict, or `""` when none did.
    pub raw_label: String,
    pub cached: bool,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl From<LlmError> for OracleError {
    fn from(e: LlmError) -> Self {
        OracleError::Unavailable(e.to_string())
    }
}

/// Answers a yes/no question about a scene with TRUE, FALSE or UNKNOWN.
pub trait ConditionOracle: Send + Sync {
    fn name(&self) -> &str;
    fn check_condition(&self, scene: &Scene, question: &str) -> Result<ConditionVerdict, OracleError>;
}

fn require_question(question: &str) -> Result<(), OracleError> {
    if question.trim().is_empty() {
        Err(OracleError::Precondition("question must be non-empty".into()))
    } else {
        Ok(())
    }
}

type Memo = RwLock<HashMap<(String, String), ConditionVerdict>>;

/// Classifies over `yes`/`no`/`unknown` with the condition template at
/// temperature 0. Answers are remembered per `(scene id, question)` for the
/// life of the oracle.
pub struct LlmConditionOracle {
    client: Arc<LlmClient>,
    config: GenerationConfig,
    memo: Memo,
}

impl LlmConditionOracle {
    pub fn new(client: Arc<LlmClient>, model: impl Into<String>) -> Self {
        Self {
            client,
            config: GenerationConfig::greedy(model, 4).with_top_logprobs(5),
            memo: RwLock::new(HashMap::new()),
        }
    }
}

impl ConditionOracle for LlmConditionOracle {
    fn name(&self) -> &str {
        "llm"
    }

    fn check_condition(&self, scene: &Scene, question: &str) -> Result<ConditionVerdict, OracleError> {
        require_question(question)?;
        let key = (scene.id.clone(), question.to_string());
        if let Some(v) = self.memo.read().unwrap().get(&key) {
            return Ok(ConditionVerdict {
                cached: true,
                ..v.clone()
            });
        }
        let bindings = [
            ("character", scene.character.as_str()),
            ("scene", scene.context.as_str()),
            ("question", question),
        ];
        let verdict = match self
            .client
            .classify("condition", &bindings, &CONDITION_LABELS, &self.config)
        {
            Ok(c) => ConditionVerdict {
                verdict: Tri::from_label(&c.label).unwrap_or(Tri::Unknown),
                source: VerdictSource::Llm,
                raw_label: c.label,
                cached: c.exchange.cache_hit,
            },
            Err(LlmError::Unparseable {
                completion, exchange, ..
            }) => {
                warn!(
                    question,
                    completion, "condition answer matched no label; treating as unknown"
                );
                ConditionVerdict {
                    verdict: Tri::Unknown,
                    source: VerdictSource::Llm,
                    raw_label: String::new(),
                    cached: exchange.cache_hit,
                }
            }
            Err(e) => return Err(e.into()),
        };
        let mut memo = self.memo.write().unwrap();
        let committed = memo.entry(key).or_insert(verdict.clone());
        Ok(if committed == &verdict {
            verdict
        } else {
            ConditionVerdict {
                cached: true,
                ..committed.clone()
            }
        })
    }
}

/// Exact lookup on `(scene id, question)`; misses are UNKNOWN.
///
/// JSON form: `{"<scene id>": {"<question>": "yes" | "no" | "unknown"}}`.
#[derive(Clone, Debug, Default)]
pub struct TableConditionOracle {
    table: HashMap<String, HashMap<String, Tri>>,
}

impl TableConditionOracle {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str, Tri)>) -> Self {
        let mut t = Self::default();
        for (scene, question, v) in pairs {
            t.insert(scene, question, v);
        }
        t
    }

    pub fn insert(&mut self, scene_id: &str, question: &str, verdict: Tri) {
        self.table
            .entry(scene_id.to_string())
            .or_default()
            .insert(question.to_string(), verdict);
    }

    pub fn from_json(value: &Value) -> Result<Self, String> {
        let raw: HashMap<String, HashMap<String, String>> =
            serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        let mut t = Self::default();
        for (scene, questions) in raw {
            for (q, label) in questions {
                let v =
                    Tri::from_label(&label).ok_or_else(|| format!("scene {scene}: bad label {label:?} for {q:?}"))?;
                t.insert(&scene, &q, v);
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&value).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn len(&self) -> usize {
        self.table.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ConditionOracle for TableConditionOracle {
    fn name(&self) -> &str {
        "table"
    }

    fn check_condition(&self, scene: &Scene, question: &str) -> Result<ConditionVerdict, OracleError> {
        require_question(question)?;
        let hit = self.table.get(&scene.id).and_then(|m| m.get(question)).copied();
        Ok(ConditionVerdict {
            verdict: hit.unwrap_or(Tri::Unknown),
            source: VerdictSource::Table,
            raw_label: hit.map(|v| v.label().to_string()).unwrap_or_default(),
            cached: false,
        })
    }
}

/// Client for a served three-class checker speaking
/// `POST {scene, question} -> {label, scores}`.
pub struct RemoteConditionOracle {
    url: String,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl RemoteConditionOracle {
    pub fn new(url: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Self {
            url: url.into(),
            agent: config.into(),
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ENV_REMOTE_CHECKER_URL)
            .ok()
            .filter(|s| !s.is_empty())
            .map(Self::new)
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post(&self, body: &Value) -> Result<String, String> {
        let mut resp = self.agent.post(&self.url).send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

impl ConditionOracle for RemoteConditionOracle {
    fn name(&self) -> &str {
        "remote"
    }

    fn check_condition(&self, scene: &Scene, question: &str) -> Result<ConditionVerdict, OracleError> {
        require_question(question)?;
        let body = json!({"scene": scene.context, "question": question});
        let mut last = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.post(&body) {
                Ok(text) => {
                    let label = serde_json::from_str::<Value>(&text)
                        .ok()
                        .and_then(|v| v.get("label").and_then(Value::as_str).map(str::to_lowercase));
                    let verdict = label
                        .as_deref()
                        .and_then(|l| CONDITION_LABELS.contains(&l).then(|| Tri::from_label(l)).flatten());
                    return Ok(match verdict {
                        Some(v) => ConditionVerdict {
                            verdict: v,
                            source: VerdictSource::Remote,
                            raw_label: label.unwrap(),
                            cached: false,
                        },
                        None => {
                            warn!(question, reply = %text, "malformed checker reply; treating as unknown");
                            ConditionVerdict {
                                verdict: Tri::Unknown,
                                source: VerdictSource::Remote,
                                raw_label: String::new(),
                                cached: false,
                            }
                        }
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(OracleError::Unavailable(format!("{}: {last}", self.url)))
    }
}
