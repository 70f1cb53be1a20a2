//! Semantic judges: condition checks, NLI scoring and pairwise preference.

mod condition;
mod distill;
mod nli;
mod preference;

pub use condition::{
    ConditionOracle, ConditionVerdict, LlmConditionOracle, OracleError, RemoteConditionOracle, TableConditionOracle,
    VerdictSource, CONDITION_LABELS, ENV_REMOTE_CHECKER_URL,
};
pub use distill::{export_distillation_data, llm_checks, DistillError, DistillExport, DistillLine};
pub use nli::{content_hash, LlmNli, NliBackend, NliJudge, NliRelation, NliVerdict, TableNli};
pub use preference::{LlmPreference, PreferenceBackend, PreferenceJudge, PreferenceVerdict, Shown, Winner};
