//! In-process provider that answers from a script of substring rules.
//!
//! Script JSON:
//!
//! ```json
//! {"rules": [
//!    {"match": ["Is Brann underwater?"], "reply": "yes"},
//!    {"match": ["Revise"], "replies": ["first try", "second try"]},
//!    {"match": ["ECHO"], "echo": true}
//!  ],
//!  "default": "unknown"}
//! ```
//!
//! The first rule whose substrings all occur in the prompt answers. A
//! `replies` list is consumed in order and then repeats its last entry.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::provider::{approx_tokens, LlmProvider, LlmRequest, LlmResponse, ProviderError};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match", default)]
    pub all_of: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<String>,
    #[serde(default)]
    pub echo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<(String, f64)>>,
}

impl ScriptRule {
    pub fn reply(all_of: &[&str], reply: impl Into<String>) -> Self {
        Self {
            all_of: all_of.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.into()),
            ..Default::default()
        }
    }

    pub fn sequence(all_of: &[&str], replies: &[&str]) -> Self {
        Self {
            all_of: all_of.iter().map(|s| s.to_string()).collect(),
            replies: replies.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn echo(all_of: &[&str]) -> Self {
        Self {
            all_of: all_of.iter().map(|s| s.to_string()).collect(),
            echo: true,
            ..Default::default()
        }
    }

    pub fn with_logprobs(mut self, scores: &[(&str, f64)]) -> Self {
        self.logprobs = Some(scores.iter().map(|(t, s)| (t.to_string(), *s)).collect());
        self
    }

    fn matches(&self, prompt: &str) -> bool {
        self.all_of.iter().all(|s| prompt.contains(s.as_str()))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

pub struct ScriptedProvider {
    script: Script,
    cursors: Mutex<Vec<usize>>,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        let n = script.rules.len();
        Self {
            script,
            cursors: Mutex::new(vec![0; n]),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        Self::new(Script { rules, default: None })
    }

    /// A provider that returns every prompt unchanged.
    pub fn echo() -> Self {
        Self::from_rules(vec![ScriptRule::echo(&[])])
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: Script = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Prompts received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

impl LlmProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(&self, request: &LlmRequest) -> Result<LlmResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(request.prompt.clone());
        let hit = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matches(&request.prompt));
        let (text, logprobs) = match hit {
            Some((_, rule)) if rule.echo => (request.prompt.clone(), rule.logprobs.clone()),
            Some((i, rule)) if !rule.replies.is_empty() => {
                let mut cursors = self.cursors.lock().unwrap();
                let at = cursors[i].min(rule.replies.len() - 1);
                cursors[i] += 1;
                (rule.replies[at].clone(), rule.logprobs.clone())
            }
            Some((_, rule)) => (rule.reply.clone().unwrap_or_default(), rule.logprobs.clone()),
            None => match &self.script.default {
                Some(d) => (d.clone(), None),
                None => {
                    let head: String = request.prompt.chars().take(80).collect();
                    return Err(ProviderError::Malformed(format!(
                        "no scripted reply for prompt starting {head:?}"
                    )));
                }
            },
        };
        Ok(LlmResponse {
            prompt_tokens: approx_tokens(&request.prompt),
            completion_tokens: approx_tokens(&text),
            text,
            first_token_logprobs: logprobs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> LlmRequest {
        LlmRequest {
            model: "m".into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 16,
            top_logprobs: None,
        }
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = ScriptedProvider::from_rules(vec![
            ScriptRule::reply(&["alpha", "beta"], "both"),
            ScriptRule::reply(&["alpha"], "one"),
        ]);
        assert_eq!(p.generate(&req("alpha beta")).unwrap().text, "both");
        assert_eq!(p.generate(&req("alpha")).unwrap().text, "one");
        assert!(p.generate(&req("gamma")).is_err());
        assert_eq!(p.calls(), 3);
    }

    #[test]
    fn sequences_repeat_last_entry() {
        let p = ScriptedProvider::from_rules(vec![ScriptRule::sequence(&[], &["a", "b"])]);
        let got: Vec<String> = (0..4).map(|_| p.generate(&req("x")).unwrap().text).collect();
        assert_eq!(got, ["a", "b", "b", "b"]);
    }

    #[test]
    fn script_json_round_trip() {
        let text = r#"{"rules":[{"match":["q"],"reply":"yes"},{"match":[],"echo":true}],"default":"unknown"}"#;
        let script: Script = serde_json::from_str(text).unwrap();
        let p = ScriptedProvider::new(script);
        assert_eq!(p.generate(&req("q")).unwrap().text, "yes");
        assert_eq!(p.generate(&req("other")).unwrap().text, "other");
    }
}
