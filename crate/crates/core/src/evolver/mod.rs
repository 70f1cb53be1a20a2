//! Keeping codified profiles in step with the storyline.

mod revise;
mod run;
mod store;

use thiserror::Error;

use crate::dsl::{render_diagnostics, Diagnostic};
use crate::llm::LlmError;

pub use revise::{blame_listing, diagnose, issue_phrase, revise_segment, Diagnosis, ReviseOptions};
pub use run::{evolving_run, is_sequential, EvolveDeps, EvolveSettings, EvolvingOutcome, TimelineEvent, TimelineKind};
pub use store::{
    changed_segments, store_dir, ProfileVersion, Provenance, Revision, StoreError, StoreMeta, VersionStore,
};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("revision of {segment_id} failed after {attempts} attempts\n{}", render_diagnostics(.diagnostics))]
    ReviseFailed {
        segment_id: String,
        attempts: u32,
        diagnostics: Vec<Diagnostic>,
    },
}
