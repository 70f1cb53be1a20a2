use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use super::segment::{segment_profile, Granularity, Segment};
use crate::dsl::{self, render_diagnostics, Diagnostic, DiagnosticKind, Expr, Position, Program, Stmt, StrExpr};
use crate::llm::{first_fenced_block, GenerationConfig, LlmClient, LlmError};

/// Profile input document: `{character, artifact, text}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub character: String,
    #[serde(default)]
    pub artifact: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<Segment>,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn segmented(mut self, granularity: Granularity) -> Self {
        self.segments = segment_profile(&self.text, granularity);
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodifiedSegment {
    pub segment: Segment,
    #[serde(skip)]
    pub program: Option<Program>,
    pub source: String,
    pub attempts: u32,
    pub codify_model: String,
    /// The program is the relevance-check wrapper around the raw segment
    /// text, not a codification of it.
    #[serde(default)]
    pub fallback: bool,
}

impl CodifiedSegment {
    fn new(segment: Segment, program: Program, attempts: u32, model: &str, fallback: bool) -> Self {
        Self {
            source: program.canonical_source(),
            segment,
            program: Some(program),
            attempts,
            codify_model: model.to_string(),
            fallback,
        }
    }

    pub fn program(&self) -> Program {
        match &self.program {
            Some(p) => p.clone(),
            None => dsl::parse(&self.source, &self.segment.id).expect("codified sources are parse-clean"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CodifyError {
    #[error("segment {segment_id}: no parse-clean program after {attempts} attempts\n{}", render_diagnostics(.diagnostics))]
    CodifyFailed {
        segment_id: String,
        attempts: u32,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("segment {segment_id}: {source}")]
    Llm {
        segment_id: String,
        #[source]
        source: LlmError,
    },
    #[error("max_attempts must be at least 1")]
    NoAttempts,
}

#[derive(Clone, Debug)]
pub struct CodifyOptions {
    pub model: String,
    pub max_attempts: u32,
    pub include_randomness: bool,
    pub max_tokens: u32,
}

impl CodifyOptions {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            max_attempts: 3,
            include_randomness: false,
            max_tokens: 1024,
        }
    }

    pub fn with_randomness(mut self, yes: bool) -> Self {
        self.include_randomness = yes;
        self
    }

    pub fn with_max_attempts(mut self, n: u32) -> Self {
        self.max_attempts = n;
        self
    }
}

const WITH_RANDOMNESS: &str = "- Where the segment says sometimes, often, rarely or similar, gate the behavior with chance(p) using a fitting probability. Where it lists alternative behaviors, pick among them with choice([...]).\n";
const WITHOUT_RANDOMNESS: &str =
    "- Do not use chance or choice. Describe frequencies inside the triggered statement instead.\n";

/// Asks the LLM for a program until one parses, feeding the previous
/// attempt's diagnostics back into the prompt.
pub fn codify_segment(
    segment: &Segment,
    character: &str,
    client: &LlmClient,
    options: &CodifyOptions,
) -> Result<CodifiedSegment, CodifyError> {
    if options.max_attempts == 0 {
        return Err(CodifyError::NoAttempts);
    }
    let config = GenerationConfig::greedy(&options.model, options.max_tokens);
    let randomness = if options.include_randomness {
        WITH_RANDOMNESS
    } else {
        WITHOUT_RANDOMNESS
    };
    let mut feedback = String::new();
    let mut last = Vec::new();
    for attempt in 1..=options.max_attempts {
        let exchange = client
            .complete(
                "codify",
                &[
                    ("character", character),
                    ("grammar", dsl::GRAMMAR),
                    ("segment", &segment.text),
                    ("randomness", randomness),
                    ("feedback", &feedback),
                ],
                &config,
            )
            .map_err(|source| CodifyError::Llm {
                segment_id: segment.id.clone(),
                source,
            })?;
        let (code, diagnostics) = match extract_program(&exchange.completion, &segment.id) {
            Ok(program) => {
                return Ok(CodifiedSegment::new(
                    segment.clone(),
                    program,
                    attempt,
                    &options.model,
                    false,
                ))
            }
            Err(x) => x,
        };
        warn!(segment = %segment.id, attempt, "codify attempt rejected");
        feedback = retry_feedback(code.as_deref(), &diagnostics);
        last = diagnostics;
    }
    Err(CodifyError::CodifyFailed {
        segment_id: segment.id.clone(),
        attempts: options.max_attempts,
        diagnostics: last,
    })
}

/// Parses the first fenced block of a completion. On failure returns the
/// extracted code (if any) and the diagnostics explaining the rejection.
pub fn extract_program(completion: &str, segment_id: &str) -> Result<Program, (Option<String>, Vec<Diagnostic>)> {
    let Some(code) = first_fenced_block(completion) else {
        return Err((
            None,
            vec![Diagnostic::new(
                DiagnosticKind::Grammar,
                Position { line: 1, column: 1 },
                "reply contains no fenced code block",
            )],
        ));
    };
    dsl::parse(code, segment_id).map_err(|d| (Some(code.to_string()), d))
}

pub fn retry_feedback(code: Option<&str>, diagnostics: &[Diagnostic]) -> String {
    let mut out = String::from("\nYour previous reply was rejected.\n");
    if let Some(code) = code {
        out.push_str("Previous program:\n```\n");
        out.push_str(code);
        if !code.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    out.push_str("Problems:\n");
    out.push_str(&render_diagnostics(diagnostics));
    out.push_str("Fix every problem and keep to the grammar.\n");
    out
}

/// `if check("Is this relevant: <first 12 words>…?"): trigger "<text>"`.
pub fn rag_program(segment: &Segment) -> Program {
    let words: Vec<&str> = segment.text.split_whitespace().collect();
    let mut head = words.iter().take(12).copied().collect::<Vec<_>>().join(" ");
    let head_trimmed = head.trim_end_matches(['?', '.', '!', ',', ';', ':']).len();
    head.truncate(head_trimmed);
    if words.len() > 12 {
        head.push('\u{2026}');
    }
    let body = vec![Stmt::if_(
        Expr::check(format!("Is this relevant: {head}?")),
        vec![Stmt::trigger(StrExpr::literal(words.join(" ")))],
    )];
    Program::from_body(&segment.id, body).expect("wrapper program is always well-formed")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodifyFailure {
    pub segment_id: String,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodifyManifest {
    pub character: String,
    pub granularity: Granularity,
    pub model: String,
    pub include_randomness: bool,
    /// Segment ids in profile order.
    pub segments: Vec<String>,
    pub attempts: std::collections::BTreeMap<String, u32>,
    pub failures: Vec<CodifyFailure>,
}

#[derive(Clone, Debug)]
pub struct CodifyReport {
    pub segments: Vec<CodifiedSegment>,
    pub failures: Vec<CodifyFailure>,
    pub manifest: CodifyManifest,
}

/// Codifies every segment, in parallel, keeping profile order. A segment
/// that cannot be codified is replaced by its relevance-check wrapper and
/// listed in `failures`.
pub fn codify_profile(
    profile: &Profile,
    granularity: Granularity,
    client: &LlmClient,
    options: &CodifyOptions,
) -> CodifyReport {
    let segments = if profile.segments.is_empty() {
        segment_profile(&profile.text, granularity)
    } else {
        profile.segments.clone()
    };
    let results: Vec<Result<CodifiedSegment, CodifyError>> = segments
        .par_iter()
        .map(|s| codify_segment(s, &profile.character, client, options))
        .collect();

    let mut out = Vec::with_capacity(segments.len());
    let mut failures = Vec::new();
    for (segment, result) in segments.iter().zip(results) {
        match result {
            Ok(c) => out.push(c),
            Err(e) => {
                let attempts = match &e {
                    CodifyError::CodifyFailed { attempts, .. } => *attempts,
                    _ => 0,
                };
                warn!(segment = %segment.id, "falling back to relevance wrapper: {e}");
                failures.push(CodifyFailure {
                    segment_id: segment.id.clone(),
                    attempts,
                    reason: e.to_string(),
                });
                out.push(CodifiedSegment::new(
                    segment.clone(),
                    rag_program(segment),
                    attempts.max(1),
                    &options.model,
                    true,
                ));
            }
        }
    }
    info!(
        character = %profile.character,
        segments = out.len(),
        failures = failures.len(),
        "codified profile"
    );
    let manifest = CodifyManifest {
        character: profile.character.clone(),
        granularity,
        model: options.model.clone(),
        include_randomness: options.include_randomness,
        segments: out.iter().map(|c| c.segment.id.clone()).collect(),
        attempts: out.iter().map(|c| (c.segment.id.clone(), c.attempts)).collect(),
        failures: failures.clone(),
    };
    CodifyReport {
        segments: out,
        failures,
        manifest,
    }
}
