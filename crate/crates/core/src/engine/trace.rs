//! Decision trace events and their versioned JSON form.
//!
//! Each event serializes as one JSON object carrying `"v": 1` and an
//! `"event"` tag, e.g.
//! `{"v":1,"event":"checked","question":"Is X angry?","verdict":"true","source":"table","cached":false}`.

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::tri::Tri;
use crate::oracles::VerdictSource;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "branch", content = "index", rename_all = "snake_case")]
pub enum Branch {
    Then,
    Elif(usize),
    Else,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Checked {
        question: String,
        verdict: Tri,
        source: VerdictSource,
        cached: bool,
    },
    ChanceDrawn {
        p: f64,
        draw: f64,
        passed: bool,
    },
    ChoiceMade {
        options: Vec<String>,
        chosen_index: usize,
    },
    Triggered {
        text: String,
    },
    BranchTaken {
        #[serde(flatten)]
        branch: Branch,
    },
}

#[derive(Serialize)]
struct VersionedRef<'a> {
    v: u32,
    #[serde(flatten)]
    event: &'a TraceEvent,
}

#[derive(Deserialize)]
struct Versioned {
    v: u32,
    #[serde(flatten)]
    event: TraceEvent,
}

impl TraceEvent {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(VersionedRef {
            v: TRACE_SCHEMA_VERSION,
            event: self,
        })
        .expect("trace events always serialize")
    }
}

/// `#[serde(with = "trace_json")]` adapter for `Vec<TraceEvent>`.
pub mod trace_json {
    use super::*;

    pub fn serialize<S: Serializer>(events: &[TraceEvent], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(events.len()))?;
        for event in events {
            seq.serialize_element(&VersionedRef {
                v: TRACE_SCHEMA_VERSION,
                event,
            })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<TraceEvent>, D::Error> {
        let raw: Vec<Versioned> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|entry| {
                if entry.v == TRACE_SCHEMA_VERSION {
                    Ok(entry.event)
                } else {
                    Err(serde::de::Error::custom(format!(
                        "unsupported trace schema version {}",
                        entry.v
                    )))
                }
            })
            .collect()
    }
}
