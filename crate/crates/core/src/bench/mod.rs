//! Benchmark data, scene construction, evaluation drivers and reports.

mod record;
mod run;
mod scenes;
mod score;

use thiserror::Error;

use crate::evolver::{EvolveError, StoreError};
use crate::llm::LlmError;

pub use record::{read_records, write_records, EvalRecord, RecordHeader, Tier};
pub use run::{
    compare_runs, run_basic, run_evolving, run_stochastic, CharacterPrograms, RunDeps, RunOutput, RunSettings, Scenario,
};
pub use scenes::{
    build_scenes, filter_spoilers, question_leaks, BenchmarkManifest, BenchmarkSet, CharacterBench, CharacterEntry,
    SpoilerOutcome,
};
pub use score::{
    best_at_k, render_report, score_run, CharacterScore, CurvePoint, GroupScore, PreferenceTally, Report, SceneKey,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid benchmark input: {0}")]
    Input(String),
    #[error("spoiler filter flagged {flagged} of {total} segments; refusing without override")]
    OverAggressiveFilter { flagged: usize, total: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}
