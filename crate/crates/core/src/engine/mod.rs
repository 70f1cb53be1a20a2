//! Interpreter for codified profiles: three-valued conditions, seeded
//! randomness, and a full decision trace.

mod interp;
mod rng;
mod scene;
mod trace;
mod tri;

pub use interp::{
    eval_expr, execute_profile, execute_segment, EngineError, Execution, Interpreter, TriggeredStatement, VerdictMemo,
};
pub use rng::{RandomStream, RunSeed};
pub use scene::Scene;
pub use trace::{trace_json, Branch, TraceEvent, TRACE_SCHEMA_VERSION};
pub use tri::Tri;
