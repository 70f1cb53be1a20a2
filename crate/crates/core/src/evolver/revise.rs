use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::store::{ProfileVersion, Revision, VersionStore};
use super::EvolveError;
use crate::codifier::{extract_program, retry_feedback};
use crate::dsl::{self, Diagnostic, DiagnosticKind, Position};
use crate::engine::{Scene, TriggeredStatement};
use crate::llm::{GenerationConfig, LlmClient};
use crate::oracles::{NliRelation, NliVerdict};
use crate::responder::{Mode, ResponseRecord};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub segment_id: String,
    pub issue: NliRelation,
    pub rationale: String,
    /// The LLM's answer was unusable twice and the segment was chosen by
    /// the fallback rule.
    pub fallback: bool,
}

pub fn issue_phrase(issue: NliRelation) -> &'static str {
    match issue {
        NliRelation::Contradicted => "contradicted statement",
        NliRelation::Neutral => "relevant but not detailed statement",
        NliRelation::Entailed => "entailed",
    }
}

fn triggered_by<'a>(triggered: &'a [TriggeredStatement], segment_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    triggered
        .iter()
        .filter(move |t| t.segment_id == segment_id)
        .map(|t| t.text.as_str())
}

fn statement_lines(statements: Vec<&str>) -> String {
    if statements.is_empty() {
        return "  fired nothing\n".to_string();
    }
    statements.iter().map(|s| format!("  - {s}\n")).collect()
}

/// The blame template's segment listing: every segment of the version,
/// including those that fired nothing.
pub fn blame_listing(version: &ProfileVersion, triggered: &[TriggeredStatement]) -> String {
    version
        .sources
        .iter()
        .map(|(id, _)| format!("{id}:\n{}", statement_lines(triggered_by(triggered, id).collect())))
        .collect()
}

fn parse_blame(reply: &str) -> (Option<String>, String) {
    let mut segment = None;
    let mut issue = String::new();
    for line in reply.lines() {
        let t = line.trim();
        let lower = t.to_ascii_lowercase();
        if segment.is_none() && lower.starts_with("segment:") {
            segment = Some(
                t["segment:".len()..]
                    .trim()
                    .trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
                    .to_string(),
            );
        } else if issue.is_empty() && lower.starts_with("issue:") {
            issue = t["issue:".len()..].trim().to_string();
        }
    }
    if segment.is_none() {
        segment = reply.split_whitespace().next().map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
                .to_string()
        });
    }
    (segment.filter(|s| !s.is_empty()), issue)
}

/// Segment with the most triggered statements, ties to the earliest.
fn fallback_segment(version: &ProfileVersion, triggered: &[TriggeredStatement]) -> String {
    let mut best = (0usize, &version.sources[0].0);
    for (id, _) in &version.sources {
        let n = triggered_by(triggered, id).count();
        if n > best.0 {
            best = (n, id);
        }
    }
    best.1.clone()
}

/// Asks the LLM which segment explains a non-entailed response.
pub fn diagnose(
    scene: &Scene,
    response: &ResponseRecord,
    verdict: &NliVerdict,
    version: &ProfileVersion,
    client: &LlmClient,
    model: &str,
) -> Result<Diagnosis, EvolveError> {
    if verdict.is_entailed() {
        return Err(EvolveError::Precondition("entailed responses need no diagnosis".into()));
    }
    if response.mode != Mode::Codified {
        return Err(EvolveError::Precondition(format!(
            "diagnosis needs a CODIFIED response, got {}",
            response.mode
        )));
    }
    if version.sources.is_empty() {
        return Err(EvolveError::Precondition("profile has no segments".into()));
    }
    let reference = scene
        .reference_action
        .as_deref()
        .ok_or_else(|| EvolveError::Precondition(format!("scene {} has no reference action", scene.id)))?;
    let listing = blame_listing(version, &response.triggered);
    let ids: Vec<&str> = version.sources.iter().map(|(id, _)| id.as_str()).collect();
    let config = GenerationConfig::greedy(model, 128);
    let mut note = String::new();
    for attempt in 0..2 {
        let ex = client.complete(
            "blame",
            &[
                ("character", scene.character.as_str()),
                ("scene", &scene.context),
                ("reference", reference),
                ("response", &response.response),
                ("issue", issue_phrase(verdict.relation)),
                ("segments", &listing),
                ("note", &note),
            ],
            &config,
        )?;
        let (segment, rationale) = parse_blame(&ex.completion);
        match segment {
            Some(s) if ids.contains(&s.as_str()) => {
                return Ok(Diagnosis {
                    segment_id: s,
                    issue: verdict.relation,
                    rationale,
                    fallback: false,
                })
            }
            other => {
                warn!(scene = %scene.id, attempt, answer = ?other, "blame answer names no listed segment");
                note = format!(
                    "\nYour previous answer {:?} is not a listed segment id. Choose one of: {}.\n",
                    other.unwrap_or_default(),
                    ids.join(", ")
                );
            }
        }
    }
    Ok(Diagnosis {
        segment_id: fallback_segment(version, &response.triggered),
        issue: verdict.relation,
        rationale: String::new(),
        fallback: true,
    })
}

#[derive(Clone, Debug)]
pub struct ReviseOptions {
    pub model: String,
    pub max_attempts: u32,
}

impl ReviseOptions {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            max_attempts: 3,
        }
    }
}

/// Rewrites the blamed segment's program and commits it as the next
/// version. On failure the store is unchanged.
pub fn revise_segment(
    store: &mut VersionStore,
    diagnosis: &Diagnosis,
    scene: &Scene,
    response: &ResponseRecord,
    client: &LlmClient,
    options: &ReviseOptions,
) -> Result<Revision, EvolveError> {
    let seg_id = diagnosis.segment_id.as_str();
    let old_source = store
        .current()
        .source(seg_id)
        .ok_or_else(|| EvolveError::Precondition(format!("segment {seg_id} is not in the current version")))?
        .to_string();
    let segment_text = store.segment(seg_id).map(|s| s.text.clone()).unwrap_or_default();
    let reference = scene
        .reference_action
        .as_deref()
        .ok_or_else(|| EvolveError::Precondition(format!("scene {} has no reference action", scene.id)))?;
    if options.max_attempts == 0 {
        return Err(EvolveError::Precondition("max_attempts must be at least 1".into()));
    }
    let triggered = statement_lines(triggered_by(&response.triggered, seg_id).collect());
    let problem = if diagnosis.rationale.is_empty() {
        issue_phrase(diagnosis.issue).to_string()
    } else {
        format!("{} ({})", issue_phrase(diagnosis.issue), diagnosis.rationale)
    };
    let config = GenerationConfig::greedy(&options.model, 1024);
    let mut feedback = String::new();
    let mut last: Vec<Diagnostic> = Vec::new();
    for attempt in 1..=options.max_attempts {
        let ex = client.complete(
            "revise",
            &[
                ("character", scene.character.as_str()),
                ("grammar", dsl::GRAMMAR),
                ("segment_id", seg_id),
                ("segment_text", &segment_text),
                ("code", old_source.trim_end()),
                ("scene", &scene.context),
                ("triggered", &triggered),
                ("reference", reference),
                ("response", &response.response),
                ("issue", &problem),
                ("feedback", &feedback),
            ],
            &config,
        )?;
        match extract_program(&ex.completion, seg_id) {
            Ok(program) => {
                let new_source = program.canonical_source();
                if new_source == old_source {
                    last = vec![Diagnostic::new(
                        DiagnosticKind::Grammar,
                        Position { line: 1, column: 1 },
                        "revised program is identical to the current one",
                    )];
                    feedback = retry_feedback(Some(&new_source), &last);
                    continue;
                }
                let rev = Revision {
                    version: store.current().version + 1,
                    scene_id: scene.id.clone(),
                    blamed_segment: seg_id.to_string(),
                    issue: diagnosis.issue,
                    old_source,
                    new_source,
                    rationale: diagnosis.rationale.clone(),
                };
                store.commit(rev.clone())?;
                info!(
                    character = store.character(),
                    version = rev.version,
                    segment = seg_id,
                    attempt,
                    "committed revision"
                );
                return Ok(rev);
            }
            Err((code, diags)) => {
                feedback = retry_feedback(code.as_deref(), &diags);
                last = diags;
            }
        }
    }
    warn!(segment = seg_id, scene = %scene.id, "revision failed; version unchanged");
    Err(EvolveError::ReviseFailed {
        segment_id: seg_id.to_string(),
        attempts: options.max_attempts,
        diagnostics: last,
    })
}
