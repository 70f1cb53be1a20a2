use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::condition::OracleError;
use crate::llm::{GenerationConfig, LlmClient, LlmError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    #[serde(rename = "TIE")]
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceVerdict {
    pub winner: Winner,
    pub order_consistent: bool,
}

/// Which of two displayed candidates a single judgment favors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shown {
    First,
    Second,
    Tie,
}

pub trait PreferenceBackend: Send + Sync {
    fn prefer(&self, scene: &str, reference: &str, first: &str, second: &str) -> Result<Option<Shown>, OracleError>;
}

pub struct PreferenceJudge {
    backend: Box<dyn PreferenceBackend>,
}

impl PreferenceJudge {
    pub fn new(backend: impl PreferenceBackend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
        }
    }

    /// Asks the backend twice, once with each candidate shown first. Only an
    /// agreeing pair of judgments produces a winner.
    pub fn judge(&self, scene: &str, reference: &str, a: &str, b: &str) -> Result<PreferenceVerdict, OracleError> {
        if [reference, a, b].iter().any(|s| s.trim().is_empty()) {
            return Err(OracleError::Precondition(
                "reference and both responses must be non-empty".into(),
            ));
        }
        if a == b {
            return Ok(PreferenceVerdict {
                winner: Winner::Tie,
                order_consistent: true,
            });
        }
        let forward = match self.ask(scene, reference, a, b)? {
            Shown::First => Winner::A,
            Shown::Second => Winner::B,
            Shown::Tie => Winner::Tie,
        };
        let swapped = match self.ask(scene, reference, b, a)? {
            Shown::First => Winner::B,
            Shown::Second => Winner::A,
            Shown::Tie => Winner::Tie,
        };
        Ok(if forward == swapped {
            PreferenceVerdict {
                winner: forward,
                order_consistent: true,
            }
        } else {
            PreferenceVerdict {
                winner: Winner::Tie,
                order_consistent: false,
            }
        })
    }

    fn ask(&self, scene: &str, reference: &str, first: &str, second: &str) -> Result<Shown, OracleError> {
        Ok(self
            .backend
            .prefer(scene, reference, first, second)?
            .unwrap_or_else(|| {
                warn!("no usable preference judgment; counting as tie");
                Shown::Tie
            }))
    }
}

pub struct LlmPreference {
    client: Arc<LlmClient>,
    config: GenerationConfig,
}

impl LlmPreference {
    pub fn new(client: Arc<LlmClient>, model: impl Into<String>) -> Self {
        Self {
            client,
            config: GenerationConfig::greedy(model, 4).with_top_logprobs(5),
        }
    }
}

impl PreferenceBackend for LlmPreference {
    fn prefer(&self, scene: &str, reference: &str, first: &str, second: &str) -> Result<Option<Shown>, OracleError> {
        let bindings = [
            ("scene", scene),
            ("reference", reference),
            ("first", first),
            ("second", second),
        ];
        match self
            .client
            .classify("preference", &bindings, &["1", "2", "tie"], &self.config)
        {
            Ok(c) => Ok(Some(match c.label.as_str() {
                "1" => Shown::First,
                "2" => Shown::Second,
                _ => Shown::Tie,
            })),
            Err(LlmError::Unparseable { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
