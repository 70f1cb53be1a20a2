use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Scene, TraceEvent, TriggeredStatement};
use crate::oracles::NliVerdict;
use crate::responder::{Mode, ResponseRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tier {
    Main,
    Minor,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Main => "MAIN",
            Tier::Minor => "MINOR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordHeader {
    pub character: String,
    pub artifact: String,
    pub tier: Tier,
}

/// One scored trial: a response to one scene under one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub character: String,
    pub artifact: String,
    pub tier: Tier,
    pub scene_id: String,
    pub order_index: u64,
    pub mode: Mode,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default)]
    pub reasoning_steps: usize,
    #[serde(default)]
    pub cot_budget: u32,
    pub nli: Option<NliVerdict>,
    pub version_used: u64,
    pub forward_passes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_index: Option<u64>,
    #[serde(default)]
    pub triggered: Vec<TriggeredStatement>,
    #[serde(default, with = "crate::engine::trace_json")]
    pub trace: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn scored(
        header: &RecordHeader,
        scene: &Scene,
        response: ResponseRecord,
        nli: Option<NliVerdict>,
        version_used: u64,
        k_index: Option<u64>,
    ) -> Self {
        Self {
            character: header.character.clone(),
            artifact: header.artifact.clone(),
            tier: header.tier,
            scene_id: scene.id.clone(),
            order_index: scene.order_index,
            mode: response.mode,
            response: response.response,
            reasoning: response.reasoning,
            reasoning_steps: response.reasoning_steps,
            cot_budget: response.cot_budget,
            nli,
            version_used,
            forward_passes: response.forward_passes,
            k_index,
            triggered: response.triggered,
            trace: response.trace,
            error: None,
        }
    }

    pub fn failed(
        header: &RecordHeader,
        scene: &Scene,
        mode: Mode,
        version_used: u64,
        k_index: Option<u64>,
        error: String,
    ) -> Self {
        Self {
            character: header.character.clone(),
            artifact: header.artifact.clone(),
            tier: header.tier,
            scene_id: scene.id.clone(),
            order_index: scene.order_index,
            mode,
            response: String::new(),
            reasoning: None,
            reasoning_steps: 0,
            cot_budget: 0,
            nli: None,
            version_used,
            forward_passes: 0,
            k_index,
            triggered: Vec::new(),
            trace: Vec::new(),
            error: Some(error),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some() || self.nli.is_none()
    }
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, String> {
    let f = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    std::io::BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map(|l| !l.trim().is_empty()).unwrap_or(true))
        .map(|(n, line)| {
            let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&line).map_err(|e| format!("{} line {}: {e}", path.display(), n + 1))
        })
        .collect()
}
