use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tracing::warn;

use super::condition::OracleError;
use crate::llm::{GenerationConfig, LlmClient, LlmError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliRelation {
    Entailed,
    Neutral,
    Contradicted,
}

impl NliRelation {
    pub const ALL: [NliRelation; 3] = [NliRelation::Entailed, NliRelation::Neutral, NliRelation::Contradicted];

    pub fn score(self) -> u8 {
        match self {
            NliRelation::Entailed => 100,
            NliRelation::Neutral => 50,
            NliRelation::Contradicted => 0,
        }
    }

    pub fn from_score(score: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.score() == score)
    }

    pub fn label(self) -> &'static str {
        match self {
            NliRelation::Entailed => "entailed",
            NliRelation::Neutral => "neutral",
            NliRelation::Contradicted => "contradicted",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let l = label.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|r| r.label() == l)
    }
}

/// A relation together with its fixed score; construct through
/// [`NliVerdict::new`] so the two can never disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct NliVerdict {
    pub relation: NliRelation,
    pub score: u8,
}

#[derive(Deserialize)]
struct RawVerdict {
    relation: NliRelation,
    score: u8,
}

impl TryFrom<RawVerdict> for NliVerdict {
    type Error = String;
    fn try_from(raw: RawVerdict) -> Result<Self, String> {
        if raw.relation.score() == raw.score {
            Ok(NliVerdict::new(raw.relation))
        } else {
            Err(format!(
                "score {} does not match relation {}",
                raw.score,
                raw.relation.label()
            ))
        }
    }
}

impl NliVerdict {
    pub fn new(relation: NliRelation) -> Self {
        Self {
            relation,
            score: relation.score(),
        }
    }

    pub fn is_entailed(&self) -> bool {
        self.relation == NliRelation::Entailed
    }
}

/// Something that can relate a response to a reference action. `Ok(None)`
/// means the backend produced no usable judgment.
pub trait NliBackend: Send + Sync {
    fn name(&self) -> &str;
    fn relate(&self, scene: &str, reference: &str, response: &str) -> Result<Option<NliRelation>, OracleError>;
}

pub struct NliJudge {
    backend: Box<dyn NliBackend>,
}

impl NliJudge {
    pub fn new(backend: impl NliBackend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
        }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Identical strings are ENTAILED without consulting the backend; an
    /// unusable judgment is NEUTRAL.
    pub fn judge(&self, scene: &str, reference: &str, response: &str) -> Result<NliVerdict, OracleError> {
        if reference.trim().is_empty() || response.trim().is_empty() {
            return Err(OracleError::Precondition(
                "reference and response must be non-empty".into(),
            ));
        }
        if reference == response {
            return Ok(NliVerdict::new(NliRelation::Entailed));
        }
        let relation = self.backend.relate(scene, reference, response)?.unwrap_or_else(|| {
            warn!(
                backend = self.backend.name(),
                "no usable NLI judgment; scoring as neutral"
            );
            NliRelation::Neutral
        });
        Ok(NliVerdict::new(relation))
    }
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Lookup keyed by SHA-256 of the reference and the response.
///
/// JSON form: `{"<reference sha256>": {"<response sha256>": "entailed"}}`.
#[derive(Clone, Debug, Default)]
pub struct TableNli {
    table: HashMap<String, HashMap<String, NliRelation>>,
}

impl TableNli {
    pub fn insert(&mut self, reference: &str, response: &str, relation: NliRelation) {
        self.table
            .entry(content_hash(reference))
            .or_default()
            .insert(content_hash(response), relation);
    }

    pub fn from_json(value: &Value) -> Result<Self, String> {
        let raw: HashMap<String, HashMap<String, String>> =
            serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        let mut table: HashMap<String, HashMap<String, NliRelation>> = HashMap::new();
        for (r, responses) in raw {
            for (a, label) in responses {
                let rel = NliRelation::from_label(&label).ok_or_else(|| format!("bad relation {label:?}"))?;
                table.entry(r.clone()).or_default().insert(a, rel);
            }
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&value).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> Value {
        let sorted: std::collections::BTreeMap<_, std::collections::BTreeMap<_, _>> = self
            .table
            .iter()
            .map(|(k, m)| (k.clone(), m.iter().map(|(a, r)| (a.clone(), r.label())).collect()))
            .collect();
        serde_json::to_value(sorted).unwrap()
    }
}

impl NliBackend for TableNli {
    fn name(&self) -> &str {
        "table"
    }

    fn relate(&self, _scene: &str, reference: &str, response: &str) -> Result<Option<NliRelation>, OracleError> {
        Ok(self
            .table
            .get(&content_hash(reference))
            .and_then(|m| m.get(&content_hash(response)))
            .copied())
    }
}

pub struct LlmNli {
    client: Arc<LlmClient>,
    config: GenerationConfig,
    include_scene: bool,
}

impl LlmNli {
    pub fn new(client: Arc<LlmClient>, model: impl Into<String>) -> Self {
        Self {
            client,
            config: GenerationConfig::greedy(model, 8).with_top_logprobs(5),
            include_scene: true,
        }
    }

    /// Whether the scene context is shown to the judge.
    pub fn include_scene(mut self, yes: bool) -> Self {
        self.include_scene = yes;
        self
    }
}

impl NliBackend for LlmNli {
    fn name(&self) -> &str {
        "llm"
    }

    fn relate(&self, scene: &str, reference: &str, response: &str) -> Result<Option<NliRelation>, OracleError> {
        let scene = if self.include_scene { scene } else { "(not shown)" };
        let labels = NliRelation::ALL.map(NliRelation::label);
        match self.client.classify(
            "nli",
            &[("scene", scene), ("reference", reference), ("response", response)],
            &labels,
            &self.config,
        ) {
            Ok(c) => Ok(NliRelation::from_label(&c.label)),
            Err(LlmError::Unparseable { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
