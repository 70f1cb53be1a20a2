use serde::{Deserialize, Serialize};
use tracing::warn;

use super::revise::{diagnose, revise_segment, ReviseOptions};
use super::store::{Revision, VersionStore};
use super::EvolveError;
use crate::bench::{EvalRecord, RecordHeader};
use crate::engine::Scene;
use crate::llm::LlmClient;
use crate::oracles::{ConditionOracle, NliJudge};
use crate::responder::{respond, Grounding, Mode, ResponderConfig};

pub struct EvolveDeps<'a> {
    pub oracle: &'a dyn ConditionOracle,
    pub nli: &'a NliJudge,
    pub client: &'a LlmClient,
}

#[derive(Clone, Debug)]
pub struct EvolveSettings {
    pub responder: ResponderConfig,
    pub blame_model: String,
    pub revise: ReviseOptions,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineKind {
    Responded { version: u64 },
    Scored { score: u8 },
    Revised { version: u64, segment: String },
    ReviseFailed { segment: String },
    Failed { error: String },
}

/// One step of an evolving run on a logical clock.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub tick: u64,
    pub scene_id: String,
    #[serde(flatten)]
    pub kind: TimelineKind,
}

#[derive(Clone, Debug, Default)]
pub struct EvolvingOutcome {
    pub records: Vec<EvalRecord>,
    pub revisions: Vec<Revision>,
    pub timeline: Vec<TimelineEvent>,
}

/// Test each scene with the current profile version, then revise the blamed
/// segment before moving on if the response was not entailed.
pub fn evolving_run(
    scenes: &[Scene],
    store: &mut VersionStore,
    header: &RecordHeader,
    deps: &EvolveDeps,
    settings: &EvolveSettings,
) -> Result<EvolvingOutcome, EvolveError> {
    if scenes.windows(2).any(|w| w[0].order_index > w[1].order_index) {
        return Err(EvolveError::Precondition("scenes must be sorted by order_index".into()));
    }
    let mut out = EvolvingOutcome::default();
    let mut tick = 0u64;
    let mut log = |out: &mut EvolvingOutcome, scene: &Scene, kind: TimelineKind| {
        out.timeline.push(TimelineEvent {
            tick,
            scene_id: scene.id.clone(),
            kind,
        });
        tick += 1;
    };

    for scene in scenes {
        let version = store.current().version;
        let Some(reference) = scene.reference_action.as_deref() else {
            return Err(EvolveError::Precondition(format!(
                "scene {} has no reference action",
                scene.id
            )));
        };
        let programs = store.current().programs()?;
        let response = match respond(
            scene,
            Mode::Codified,
            &Grounding::codified(&programs, deps.oracle),
            &settings.responder,
            deps.client,
            0,
        ) {
            Ok(r) => r,
            Err(e) => {
                warn!(scene = %scene.id, "response failed: {e}");
                log(&mut out, scene, TimelineKind::Failed { error: e.to_string() });
                out.records.push(EvalRecord::failed(
                    header,
                    scene,
                    Mode::Codified,
                    version,
                    None,
                    e.to_string(),
                ));
                continue;
            }
        };
        log(&mut out, scene, TimelineKind::Responded { version });
        let verdict = match deps.nli.judge(&scene.context, reference, &response.response) {
            Ok(v) => v,
            Err(e) => {
                log(&mut out, scene, TimelineKind::Failed { error: e.to_string() });
                let mut rec = EvalRecord::scored(header, scene, response, None, version, None);
                rec.error = Some(e.to_string());
                out.records.push(rec);
                continue;
            }
        };
        log(&mut out, scene, TimelineKind::Scored { score: verdict.score });
        out.records.push(EvalRecord::scored(
            header,
            scene,
            response.clone(),
            Some(verdict),
            version,
            None,
        ));
        if verdict.is_entailed() {
            continue;
        }

        let diagnosis = match diagnose(
            scene,
            &response,
            &verdict,
            store.current(),
            deps.client,
            &settings.blame_model,
        ) {
            Ok(d) => d,
            Err(e) => {
                warn!(scene = %scene.id, "diagnosis failed: {e}");
                log(&mut out, scene, TimelineKind::Failed { error: e.to_string() });
                continue;
            }
        };
        match revise_segment(store, &diagnosis, scene, &response, deps.client, &settings.revise) {
            Ok(rev) => {
                log(
                    &mut out,
                    scene,
                    TimelineKind::Revised {
                        version: rev.version,
                        segment: rev.blamed_segment.clone(),
                    },
                );
                out.revisions.push(rev);
            }
            Err(e) => {
                warn!(scene = %scene.id, "{e}");
                log(
                    &mut out,
                    scene,
                    TimelineKind::ReviseFailed {
                        segment: diagnosis.segment_id.clone(),
                    },
                );
            }
        }
    }
    Ok(out)
}

/// True when every event of scene `i` precedes every event of scene `i+1`
/// in tick order.
pub fn is_sequential(timeline: &[TimelineEvent]) -> bool {
    let ticks_increase = timeline.windows(2).all(|w| w[0].tick < w[1].tick);
    let mut finished: Vec<&str> = Vec::new();
    for w in timeline.windows(2) {
        if w[0].scene_id != w[1].scene_id {
            finished.push(&w[0].scene_id);
            if finished.contains(&w[1].scene_id.as_str()) {
                return false;
            }
        }
    }
    ticks_increase
}
