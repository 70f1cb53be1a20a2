use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use super::record::{write_records, EvalRecord, RecordHeader};
use super::scenes::{BenchmarkSet, CharacterBench};
use super::score::{render_report, score_run, PreferenceTally, Report};
use super::BenchError;
use crate::codifier::{rag_program, segment_profile, Granularity};
use crate::dsl::{metrics, Program};
use crate::engine::Scene;
use crate::evolver::{evolving_run, EvolveDeps, EvolveSettings, ReviseOptions, TimelineEvent, VersionStore};
use crate::llm::LlmClient;
use crate::oracles::{ConditionOracle, NliJudge, PreferenceJudge};
use crate::responder::{respond, respond_stochastic, Grounding, Mode, ResponderConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Basic,
    Evolving,
    Stochastic,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Basic => "basic",
            Scenario::Evolving => "evolving",
            Scenario::Stochastic => "stochastic",
        }
    }
}

pub struct RunDeps<'a> {
    pub client: &'a LlmClient,
    pub oracle: &'a dyn ConditionOracle,
    pub nli: &'a NliJudge,
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub mode: Mode,
    pub responder: ResponderConfig,
    /// Samples per scene for stochastic runs.
    pub k: u64,
    pub workers: usize,
    pub blame_model: String,
    pub revise: ReviseOptions,
}

impl RunSettings {
    pub fn new(mode: Mode, model: impl Into<String>) -> Self {
        let model = model.into();
        Self {
            mode,
            responder: ResponderConfig::new(model.clone()),
            k: 1,
            workers: 4,
            blame_model: model.clone(),
            revise: ReviseOptions::new(model),
        }
    }
}

/// The programs a character is evaluated with and the version they came from.
#[derive(Clone, Debug)]
pub struct CharacterPrograms {
    pub character: String,
    pub version: u64,
    pub programs: Vec<Program>,
}

impl CharacterPrograms {
    pub fn from_store(store: &VersionStore, version: Option<u64>) -> Result<Self, BenchError> {
        let v = match version {
            Some(n) => store
                .version(n)
                .ok_or_else(|| BenchError::Input(format!("{} has no version {n}", store.character())))?,
            None => store.current(),
        };
        Ok(Self {
            character: store.character().to_string(),
            version: v.version,
            programs: v.programs()?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub report: Report,
    pub timeline: Vec<TimelineEvent>,
}

impl RunOutput {
    /// Writes `records.jsonl`, `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_records(&dir.join("records.jsonl"), &self.records)?;
        let json = serde_json::to_string_pretty(&self.report)?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        std::fs::write(dir.join("report.txt"), render_report(&self.report))
    }
}

fn header(set: &BenchmarkSet, c: &CharacterBench) -> RecordHeader {
    RecordHeader {
        character: c.character.clone(),
        artifact: set.artifact.clone(),
        tier: c.tier,
    }
}

fn metadata(scenario: Scenario, settings: &RunSettings, k: Option<u64>) -> serde_json::Value {
    json!({
        "scenario": scenario.as_str(),
        "mode": settings.mode.as_str(),
        "model": settings.responder.model,
        "temperature": settings.responder.temperature,
        "cot_budget": settings.responder.cot_budget,
        "base_seed": settings.responder.base_seed,
        "k": k,
        "order_dependent": scenario == Scenario::Evolving,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BenchError::Precondition(format!("worker pool: {e}")))
}

/// Programs each character is run with, resolved per mode.
fn resolve_programs(
    set: &BenchmarkSet,
    mode: Mode,
    programs: &[CharacterPrograms],
) -> Result<HashMap<String, CharacterPrograms>, BenchError> {
    let mut out = HashMap::new();
    for c in &set.characters {
        let resolved = match mode {
            Mode::CodifiedRag => {
                let segments = if c.profile.segments.is_empty() {
                    segment_profile(&c.profile.text, Granularity::Paragraph)
                } else {
                    c.profile.segments.clone()
                };
                CharacterPrograms {
                    character: c.character.clone(),
                    version: 0,
                    programs: segments.iter().map(rag_program).collect(),
                }
            }
            Mode::Codified | Mode::Ensemble => programs
                .iter()
                .find(|p| p.character == c.character)
                .cloned()
                .ok_or_else(|| BenchError::Precondition(format!("{} has no codified profile", c.character)))?,
            Mode::Vanilla | Mode::Textual => CharacterPrograms {
                character: c.character.clone(),
                version: 0,
                programs: Vec::new(),
            },
        };
        out.insert(c.character.clone(), resolved);
    }
    Ok(out)
}

fn grounding<'a>(
    mode: Mode,
    c: &'a CharacterBench,
    programs: &'a [Program],
    oracle: &'a dyn ConditionOracle,
) -> Grounding<'a> {
    match mode {
        Mode::Vanilla => Grounding::default(),
        Mode::Textual => Grounding::text(&c.profile.text),
        Mode::Codified | Mode::CodifiedRag => Grounding::codified(programs, oracle),
        Mode::Ensemble => Grounding::codified(programs, oracle).with_text(&c.profile.text),
    }
}

fn judge_one(
    deps: &RunDeps,
    h: &RecordHeader,
    scene: &Scene,
    response: crate::responder::ResponseRecord,
    version: u64,
    k_index: Option<u64>,
) -> EvalRecord {
    let reference = scene.reference_action.as_deref().unwrap_or_default();
    match deps.nli.judge(&scene.context, reference, &response.response) {
        Ok(v) => EvalRecord::scored(h, scene, response, Some(v), version, k_index),
        Err(e) => {
            warn!(scene = %scene.id, "scoring failed: {e}");
            let mut r = EvalRecord::scored(h, scene, response, None, version, k_index);
            r.error = Some(e.to_string());
            r
        }
    }
}

fn check_benchmark_scenes(set: &BenchmarkSet) -> Result<(), BenchError> {
    set.validate()?;
    for c in &set.characters {
        if let Some(s) = c.scenes.iter().find(|s| s.reference_action.is_none()) {
            return Err(BenchError::Input(format!("scene {} has no reference action", s.id)));
        }
    }
    Ok(())
}

/// One response per scene, scenes fanned out across the worker pool.
pub fn run_basic(
    set: &BenchmarkSet,
    programs: &[CharacterPrograms],
    deps: &RunDeps,
    settings: &RunSettings,
) -> Result<RunOutput, BenchError> {
    check_benchmark_scenes(set)?;
    let resolved = resolve_programs(set, settings.mode, programs)?;
    let jobs: Vec<(&CharacterBench, &Scene)> = set
        .characters
        .iter()
        .flat_map(|c| c.scenes.iter().map(move |s| (c, s)))
        .collect();
    let records: Vec<EvalRecord> = pool(settings.workers)?.install(|| {
        jobs.par_iter()
            .map(|(c, scene)| {
                let h = header(set, c);
                let p = &resolved[&c.character];
                let g = grounding(settings.mode, c, &p.programs, deps.oracle);
                match respond(scene, settings.mode, &g, &settings.responder, deps.client, 0) {
                    Ok(r) => judge_one(deps, &h, scene, r, p.version, None),
                    Err(e) => {
                        warn!(scene = %scene.id, "response failed: {e}");
                        EvalRecord::failed(&h, scene, settings.mode, p.version, None, e.to_string())
                    }
                }
            })
            .collect()
    });
    let mut report = score_run(&records, None);
    report.metadata = metadata(Scenario::Basic, settings, None);
    Ok(RunOutput {
        records,
        report,
        timeline: Vec::new(),
    })
}

/// `settings.k` sampled codified responses per scene, scored as Best@K.
pub fn run_stochastic(
    set: &BenchmarkSet,
    programs: &[CharacterPrograms],
    deps: &RunDeps,
    settings: &RunSettings,
) -> Result<RunOutput, BenchError> {
    check_benchmark_scenes(set)?;
    if settings.k < 2 {
        return Err(BenchError::Precondition("stochastic runs need k of at least 2".into()));
    }
    let resolved = resolve_programs(set, Mode::Codified, programs)?;
    for p in resolved.values() {
        if !p.programs.iter().any(|prog| metrics(prog).has_random) {
            warn!(character = %p.character, "profile has no random constructs; samples differ only by temperature");
        }
    }
    let jobs: Vec<(&CharacterBench, &Scene)> = set
        .characters
        .iter()
        .flat_map(|c| c.scenes.iter().map(move |s| (c, s)))
        .collect();
    let nested: Vec<Vec<EvalRecord>> = pool(settings.workers)?.install(|| {
        jobs.par_iter()
            .map(|(c, scene)| {
                let h = header(set, c);
                let p = &resolved[&c.character];
                let g = Grounding::codified(&p.programs, deps.oracle);
                match respond_stochastic(scene, &g, &settings.responder, deps.client, settings.k) {
                    Ok(rs) => rs
                        .into_iter()
                        .map(|r| {
                            let k_index = r.run_index;
                            judge_one(deps, &h, scene, r, p.version, Some(k_index))
                        })
                        .collect(),
                    Err(e) => {
                        warn!(scene = %scene.id, "sampling failed: {e}");
                        (0..settings.k)
                            .map(|i| EvalRecord::failed(&h, scene, Mode::Codified, p.version, Some(i), e.to_string()))
                            .collect()
                    }
                }
            })
            .collect()
    });
    let records: Vec<EvalRecord> = nested.into_iter().flatten().collect();
    let k = settings.k as usize;
    let mut report = score_run(&records, Some(k));
    report.metadata = metadata(Scenario::Stochastic, settings, Some(settings.k));
    Ok(RunOutput {
        records,
        report,
        timeline: Vec::new(),
    })
}

/// Test, then revise, scene by scene along each character's storyline.
///
/// Characters run in parallel; each character's scenes run strictly in
/// order. Every store must belong to a character of the set. With
/// [`Mode::Textual`] the profile text gets a patch note per failed scene
/// instead of a program revision.
pub fn run_evolving(
    set: &BenchmarkSet,
    stores: &mut [VersionStore],
    deps: &RunDeps,
    settings: &RunSettings,
) -> Result<RunOutput, BenchError> {
    check_benchmark_scenes(set)?;
    if settings.mode == Mode::Textual {
        return run_textual_evolving(set, deps, settings);
    }
    if settings.mode != Mode::Codified {
        return Err(BenchError::Precondition(format!(
            "evolving runs support CODIFIED or TEXTUAL, not {}",
            settings.mode.as_str()
        )));
    }
    let mut pairs: Vec<(&CharacterBench, &mut VersionStore)> = Vec::new();
    let mut by_name: HashMap<String, &mut VersionStore> =
        stores.iter_mut().map(|s| (s.character().to_string(), s)).collect();
    for c in &set.characters {
        let store = by_name
            .remove(&c.character)
            .ok_or_else(|| BenchError::Precondition(format!("{} has no profile store", c.character)))?;
        pairs.push((c, store));
    }
    let evolve = EvolveSettings {
        responder: settings.responder.clone(),
        blame_model: settings.blame_model.clone(),
        revise: settings.revise.clone(),
    };
    let edeps = EvolveDeps {
        oracle: deps.oracle,
        nli: deps.nli,
        client: deps.client,
    };
    let outcomes: Vec<Result<_, BenchError>> = pool(settings.workers)?.install(|| {
        pairs
            .par_iter_mut()
            .map(|(c, store)| {
                let h = header(set, c);
                Ok(evolving_run(&c.scenes, store, &h, &edeps, &evolve)?)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut timeline = Vec::new();
    for o in outcomes {
        let o = o?;
        records.extend(o.records);
        timeline.extend(o.timeline);
    }
    let mut report = score_run(&records, None);
    report.metadata = metadata(Scenario::Evolving, settings, None);
    Ok(RunOutput {
        records,
        report,
        timeline,
    })
}

/// The text-only evolving baseline: after each non-entailed scene a note
/// with the reference action is appended to the profile text.
fn run_textual_evolving(set: &BenchmarkSet, deps: &RunDeps, settings: &RunSettings) -> Result<RunOutput, BenchError> {
    let outcomes: Vec<Vec<EvalRecord>> = pool(settings.workers)?.install(|| {
        set.characters
            .par_iter()
            .map(|c| {
                let h = header(set, c);
                let mut text = c.profile.text.clone();
                let mut version = 0u64;
                let mut out = Vec::new();
                for scene in &c.scenes {
                    let g = Grounding::text(&text);
                    let rec = match respond(scene, Mode::Textual, &g, &settings.responder, deps.client, 0) {
                        Ok(r) => judge_one(deps, &h, scene, r, version, None),
                        Err(e) => EvalRecord::failed(&h, scene, Mode::Textual, version, None, e.to_string()),
                    };
                    if rec.nli.is_some_and(|v| !v.is_entailed()) {
                        let reference = scene.reference_action.as_deref().unwrap_or_default();
                        text.push_str(&format!("\n\nNote: when \"{}\", {reference}", scene.question));
                        version += 1;
                    }
                    out.push(rec);
                }
                out
            })
            .collect()
    });
    let records: Vec<EvalRecord> = outcomes.into_iter().flatten().collect();
    let mut report = score_run(&records, None);
    report.metadata = metadata(Scenario::Evolving, settings, None);
    Ok(RunOutput {
        records,
        report,
        timeline: Vec::new(),
    })
}

/// Pairwise preference of run `a` over run `b`, matched by character and
/// scene on the first sample of each.
pub fn compare_runs(
    set: &BenchmarkSet,
    a: &[EvalRecord],
    b: &[EvalRecord],
    judge: &PreferenceJudge,
) -> PreferenceTally {
    let first = |rs: &[EvalRecord]| -> HashMap<(String, String), String> {
        let mut m = HashMap::new();
        for r in rs.iter().filter(|r| !r.is_failure() && r.k_index.unwrap_or(0) == 0) {
            m.entry((r.character.clone(), r.scene_id.clone()))
                .or_insert_with(|| r.response.clone());
        }
        m
    };
    let (ma, mb) = (first(a), first(b));
    let mut tally = PreferenceTally::default();
    for c in &set.characters {
        for s in &c.scenes {
            let key = (c.character.clone(), s.id.clone());
            let (Some(ra), Some(rb)) = (ma.get(&key), mb.get(&key)) else {
                continue;
            };
            let reference = s.reference_action.as_deref().unwrap_or_default();
            match judge.judge(&s.context, reference, ra, rb) {
                Ok(v) => tally.add(&v),
                Err(e) => warn!(scene = %s.id, "preference judge failed: {e}"),
            }
        }
    }
    tally
}
