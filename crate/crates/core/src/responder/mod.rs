//! Role-play responses grounded in a profile.

mod chat;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Program;
use crate::engine::{execute_profile, EngineError, Execution, RunSeed, Scene, TraceEvent, TriggeredStatement};
use crate::llm::{GenerationConfig, LlmClient, LlmError};
use crate::oracles::ConditionOracle;

pub use chat::{ChatSession, ChatTurn, TRANSCRIPT_WINDOW};

/// Upper bound on generation temperature for sampled multi-response runs.
pub const MAX_STOCHASTIC_TEMPERATURE: f64 = 0.7;
pub const NO_RULE_FIRED: &str = "(no profile rule fired)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Vanilla,
    Textual,
    Codified,
    CodifiedRag,
    Ensemble,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Vanilla,
        Mode::Textual,
        Mode::Codified,
        Mode::CodifiedRag,
        Mode::Ensemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "VANILLA",
            Mode::Textual => "TEXTUAL",
            Mode::Codified => "CODIFIED",
            Mode::CodifiedRag => "CODIFIED_RAG",
            Mode::Ensemble => "ENSEMBLE",
        }
    }

    pub fn uses_programs(self) -> bool {
        matches!(self, Mode::Codified | Mode::CodifiedRag | Mode::Ensemble)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, Mode::Textual | Mode::Ensemble)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// What a response may be grounded in. Which parts are used depends on the
/// mode; a mode missing its input is a precondition error.
#[derive(Clone, Copy, Default)]
pub struct Grounding<'a> {
    pub profile_text: Option<&'a str>,
    pub programs: Option<&'a [Program]>,
    pub oracle: Option<&'a dyn ConditionOracle>,
}

impl<'a> Grounding<'a> {
    pub fn text(text: &'a str) -> Self {
        Self {
            profile_text: Some(text),
            ..Default::default()
        }
    }

    pub fn codified(programs: &'a [Program], oracle: &'a dyn ConditionOracle) -> Self {
        Self {
            profile_text: None,
            programs: Some(programs),
            oracle: Some(oracle),
        }
    }

    pub fn with_text(mut self, text: &'a str) -> Self {
        self.profile_text = Some(text);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponderConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub cot_budget: u32,
    pub base_seed: u64,
}

impl ResponderConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: 0.0,
            max_tokens: 256,
            cot_budget: 0,
            base_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub scene_id: String,
    pub mode: Mode,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub cot_budget: u32,
    /// Numbered steps found in the reasoning.
    pub reasoning_steps: usize,
    pub triggered: Vec<TriggeredStatement>,
    #[serde(with = "crate::engine::trace_json")]
    pub trace: Vec<TraceEvent>,
    pub forward_passes: u64,
    pub run_index: u64,
}

#[derive(Debug, Error)]
pub enum ResponderError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ResponderError {
    /// True when the failure came from an unavailable model or oracle rather
    /// than from bad input.
    pub fn is_transport(&self) -> bool {
        match self {
            ResponderError::Llm(_) => true,
            ResponderError::Engine(e) => e.is_oracle_unavailable(),
            ResponderError::Precondition(_) => false,
        }
    }
}

/// Statement block with repeats dropped (first occurrence kept).
pub fn statements_block(triggered: &[TriggeredStatement]) -> String {
    let mut out = String::from("Profile statements that apply to this scene:\n");
    if triggered.is_empty() {
        out.push_str(NO_RULE_FIRED);
        out.push('\n');
        return out;
    }
    let mut seen = std::collections::HashSet::new();
    for s in triggered {
        if seen.insert(s.text.as_str()) {
            out.push_str("- ");
            out.push_str(&s.text);
            out.push('\n');
        }
    }
    out
}

pub fn profile_block(text: &str) -> String {
    format!("Character profile:\n{}\n", text.trim_end())
}

/// Counts numbered steps (`1.`, `2)`) in a reasoning text; if none are
/// numbered, counts non-empty lines.
pub fn count_steps(reasoning: &str) -> usize {
    let numbered = reasoning
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            digits > 0 && matches!(t[digits..].chars().next(), Some('.') | Some(')'))
        })
        .count();
    if numbered > 0 {
        numbered
    } else {
        reasoning.lines().filter(|l| !l.trim().is_empty()).count()
    }
}

fn execute(scene: &Scene, grounding: &Grounding, seed: &RunSeed) -> Result<Execution, ResponderError> {
    let (Some(programs), Some(oracle)) = (grounding.programs, grounding.oracle) else {
        return Err(ResponderError::Precondition(
            "codified modes need programs and a condition oracle".into(),
        ));
    };
    Ok(execute_profile(programs, scene, oracle, seed)?)
}

/// Produces one response for `scene` under `mode`.
pub fn respond(
    scene: &Scene,
    mode: Mode,
    grounding: &Grounding,
    config: &ResponderConfig,
    client: &LlmClient,
    run_index: u64,
) -> Result<ResponseRecord, ResponderError> {
    let execution = if mode.uses_programs() {
        Some(execute(
            scene,
            grounding,
            &RunSeed::new(config.base_seed, &scene.id, run_index),
        )?)
    } else {
        None
    };
    respond_with(scene, mode, grounding, execution, config, client, run_index)
}

/// Like [`respond`], but with the profile already executed.
pub fn respond_with(
    scene: &Scene,
    mode: Mode,
    grounding: &Grounding,
    execution: Option<Execution>,
    config: &ResponderConfig,
    client: &LlmClient,
    run_index: u64,
) -> Result<ResponseRecord, ResponderError> {
    let mut block = String::new();
    if mode.uses_programs() {
        let exec = execution
            .as_ref()
            .ok_or_else(|| ResponderError::Precondition(format!("{mode} needs an executed profile")))?;
        block.push_str(&statements_block(&exec.statements));
    }
    if mode.uses_text() {
        let text = grounding
            .profile_text
            .ok_or_else(|| ResponderError::Precondition(format!("{mode} needs the profile text")))?;
        if !block.is_empty() {
            block.push('\n');
        }
        block.push_str(&profile_block(text));
    }
    let grounding_block = if block.is_empty() {
        String::new()
    } else {
        format!("\n{block}")
    };
    let question = if scene.is_benchmark() && !scene.question.trim().is_empty() {
        format!("\nQuestion: {}\n", scene.question.trim())
    } else {
        String::new()
    };

    let gen = GenerationConfig {
        model_name: config.model.clone(),
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        top_logprobs: None,
    };
    let mut passes = 0u64;
    let mut reasoning = None;
    let budget = config.cot_budget.to_string();
    if config.cot_budget > 0 {
        let ex = client.complete(
            "cot",
            &[
                ("character", scene.character.as_str()),
                ("grounding", &grounding_block),
                ("scene", &scene.context),
                ("question", &question),
                ("budget", &budget),
            ],
            &gen,
        )?;
        passes += u64::from(!ex.cache_hit);
        reasoning = Some(ex.completion.trim().to_string());
    }
    let reasoning_block = match &reasoning {
        Some(r) => format!("\nYour reasoning:\n{r}\n"),
        None => String::new(),
    };
    let ex = client.complete(
        "role_play",
        &[
            ("character", scene.character.as_str()),
            ("grounding", &grounding_block),
            ("scene", &scene.context),
            ("question", &question),
            ("reasoning", &reasoning_block),
        ],
        &gen,
    )?;
    passes += u64::from(!ex.cache_hit);

    let (triggered, trace, oracle_passes) = match execution {
        Some(e) => {
            let calls = e.llm_oracle_calls() as u64;
            (e.statements, e.trace, calls)
        }
        None => (Vec::new(), Vec::new(), 0),
    };
    Ok(ResponseRecord {
        scene_id: scene.id.clone(),
        mode,
        response: ex.completion.trim().to_string(),
        reasoning_steps: reasoning.as_deref().map(count_steps).unwrap_or(0),
        reasoning,
        cot_budget: config.cot_budget,
        triggered,
        trace,
        forward_passes: passes + oracle_passes,
        run_index,
    })
}

/// `k` codified responses with run indices `0..k`, so each run draws fresh
/// randomness inside the programs.
pub fn respond_stochastic(
    scene: &Scene,
    grounding: &Grounding,
    config: &ResponderConfig,
    client: &LlmClient,
    k: u64,
) -> Result<Vec<ResponseRecord>, ResponderError> {
    if k == 0 {
        return Err(ResponderError::Precondition("k must be at least 1".into()));
    }
    if config.temperature > MAX_STOCHASTIC_TEMPERATURE {
        return Err(ResponderError::Precondition(format!(
            "temperature {} exceeds {MAX_STOCHASTIC_TEMPERATURE} for sampled runs",
            config.temperature
        )));
    }
    (0..k)
        .map(|i| respond(scene, Mode::Codified, grounding, config, client, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::engine::Tri;
    use crate::llm::{RetryPolicy, ScriptRule, ScriptedProvider};
    use crate::oracles::TableConditionOracle;
    use std::sync::Arc;

    fn echo() -> (Arc<ScriptedProvider>, LlmClient) {
        let p = Arc::new(ScriptedProvider::echo());
        (p.clone(), LlmClient::new(p).with_retry(RetryPolicy::immediate()))
    }

    fn bench_scene() -> Scene {
        Scene {
            id: "s1".into(),
            artifact: "t".into(),
            character: "Ayla".into(),
            order_index: 0,
            context: "A thief grabs Ayla's satchel.".into(),
            question: "What does Ayla do?".into(),
            reference_action: Some("Ayla chases the thief.".into()),
        }
    }

    fn programs() -> Vec<Program> {
        vec![
            parse("when scene:\n  if check(\"Is something stolen?\"):\n    trigger \"Ayla pursues thieves relentlessly\"\n", "seg1").unwrap(),
            parse("when scene:\n  trigger \"Ayla pursues thieves relentlessly\"\n  trigger \"Ayla is quick\"\n", "seg2").unwrap(),
        ]
    }

    fn oracle() -> TableConditionOracle {
        TableConditionOracle::from_pairs([("s1", "Is something stolen?", Tri::True)])
    }

    #[test]
    fn vanilla_prompt_has_no_grounding() {
        let (p, c) = echo();
        let progs = programs();
        let o = oracle();
        let g = Grounding::codified(&progs, &o).with_text("PROFILE TEXT");
        let r = respond(&bench_scene(), Mode::Vanilla, &g, &ResponderConfig::new("m"), &c, 0).unwrap();
        let prompt = &p.prompts()[0];
        assert!(!prompt.contains("PROFILE TEXT"));
        assert!(!prompt.contains("Profile statements"));
        assert!(prompt.contains("Question: What does Ayla do?"));
        assert!(r.triggered.is_empty() && r.trace.is_empty());
        assert_eq!(r.forward_passes, 1);
    }

    #[test]
    fn ensemble_lists_statements_before_profile_text() {
        let (p, c) = echo();
        let progs = programs();
        let o = oracle();
        let g = Grounding::codified(&progs, &o).with_text("PROFILE TEXT");
        let r = respond(&bench_scene(), Mode::Ensemble, &g, &ResponderConfig::new("m"), &c, 0).unwrap();
        let prompt = &p.prompts()[0];
        let st = prompt.find("Ayla pursues thieves relentlessly").unwrap();
        let tx = prompt.find("PROFILE TEXT").unwrap();
        assert!(st < tx);
        assert_eq!(prompt.matches("Ayla pursues thieves relentlessly").count(), 1);
        assert_eq!(r.triggered.len(), 3);
    }

    #[test]
    fn codified_without_firing_rules_says_so() {
        let (p, c) = echo();
        let progs = vec![programs().remove(0)];
        let o = TableConditionOracle::default();
        let g = Grounding::codified(&progs, &o);
        let r = respond(&bench_scene(), Mode::Codified, &g, &ResponderConfig::new("m"), &c, 0).unwrap();
        assert!(p.prompts()[0].contains(NO_RULE_FIRED));
        assert!(!r.response.is_empty());
        assert!(!p.prompts()[0].contains("Character profile:"));
    }

    #[test]
    fn textual_needs_text_and_codified_needs_programs() {
        let (_, c) = echo();
        let cfg = ResponderConfig::new("m");
        assert!(matches!(
            respond(&bench_scene(), Mode::Textual, &Grounding::default(), &cfg, &c, 0),
            Err(ResponderError::Precondition(_))
        ));
        assert!(matches!(
            respond(&bench_scene(), Mode::Codified, &Grounding::text("x"), &cfg, &c, 0),
            Err(ResponderError::Precondition(_))
        ));
    }

    #[test]
    fn live_scenes_omit_the_question() {
        let (p, c) = echo();
        let mut s = bench_scene();
        s.reference_action = None;
        respond(
            &s,
            Mode::Vanilla,
            &Grounding::default(),
            &ResponderConfig::new("m"),
            &c,
            0,
        )
        .unwrap();
        assert!(!p.prompts()[0].contains("Question:"));
    }

    #[test]
    fn cot_budget_adds_a_reasoning_pass() {
        let p = Arc::new(ScriptedProvider::from_rules(vec![
            ScriptRule::reply(&["short steps"], "1. A thief.\n2. Ayla is fast.\n"),
            ScriptRule::reply(&["Your reasoning:"], "Ayla sprints after him."),
        ]));
        let c = LlmClient::new(p.clone()).with_retry(RetryPolicy::immediate());
        let mut cfg = ResponderConfig::new("m");
        cfg.cot_budget = 4;
        let r = respond(&bench_scene(), Mode::Vanilla, &Grounding::default(), &cfg, &c, 0).unwrap();
        assert!(p.prompts()[0].contains("at most 4 short steps"));
        assert_eq!(r.reasoning_steps, 2);
        assert_eq!(r.response, "Ayla sprints after him.");
        assert_eq!(r.forward_passes, 2);
    }

    #[test]
    fn cached_exchanges_are_not_forward_passes() {
        let (_, c) = echo();
        let g = Grounding::default();
        let cfg = ResponderConfig::new("m");
        assert_eq!(
            respond(&bench_scene(), Mode::Vanilla, &g, &cfg, &c, 0)
                .unwrap()
                .forward_passes,
            1
        );
        assert_eq!(
            respond(&bench_scene(), Mode::Vanilla, &g, &cfg, &c, 0)
                .unwrap()
                .forward_passes,
            0
        );
    }

    #[test]
    fn stochastic_preconditions_and_k1() {
        let (_, c) = echo();
        let progs = programs();
        let o = oracle();
        let g = Grounding::codified(&progs, &o);
        let mut cfg = ResponderConfig::new("m");
        assert!(respond_stochastic(&bench_scene(), &g, &cfg, &c, 0).is_err());
        let one = respond_stochastic(&bench_scene(), &g, &cfg, &c, 1).unwrap();
        let direct = respond(&bench_scene(), Mode::Codified, &g, &cfg, &c, 0).unwrap();
        assert_eq!(one[0].triggered, direct.triggered);
        assert_eq!(one[0].response, direct.response);
        cfg.temperature = 0.9;
        assert!(respond_stochastic(&bench_scene(), &g, &cfg, &c, 2).is_err());
    }

    #[test]
    fn choice_programs_vary_across_runs() {
        let (_, c) = echo();
        let progs = vec![parse(
            "when scene:\n  trigger choice([\"Ayla laughs\", \"Ayla frowns\"])\n",
            "seg1",
        )
        .unwrap()];
        let o = TableConditionOracle::default();
        let g = Grounding::codified(&progs, &o);
        let mut cfg = ResponderConfig::new("m");
        cfg.temperature = 0.7;
        let runs = respond_stochastic(&bench_scene(), &g, &cfg, &c, 20).unwrap();
        let distinct: std::collections::HashSet<String> = runs.iter().map(|r| r.triggered[0].text.clone()).collect();
        assert_eq!(distinct.len(), 2);
        assert_eq!(
            runs.iter().map(|r| r.run_index).collect::<Vec<_>>(),
            (0..20).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert_eq!("codified-rag".parse::<Mode>().unwrap(), Mode::CodifiedRag);
    }

    #[test]
    fn step_counting() {
        assert_eq!(count_steps("1. a\n2) b\nthen c"), 2);
        assert_eq!(count_steps("a\n\nb"), 2);
        assert_eq!(count_steps(""), 0);
    }
}
