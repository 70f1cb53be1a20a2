use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::condition::{OracleError, VerdictSource};
use crate::engine::{Scene, TraceEvent, Tri};

/// One training example for a distilled condition checker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillLine {
    pub scene: String,
    pub question: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistillExport {
    pub path: PathBuf,
    pub count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error(transparent)]
    Precondition(#[from] OracleError),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Writes one `{scene, question, label}` line per distinct
/// `(scene id, question)` pair, keeping the first occurrence.
pub fn export_distillation_data(records: &[(Scene, String, Tri)], path: &Path) -> Result<DistillExport, DistillError> {
    if records.is_empty() {
        return Err(OracleError::Precondition("no records to export".into()).into());
    }
    let io_err = |source| DistillError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let mut seen = HashSet::new();
    let mut count = 0;
    for (scene, question, verdict) in records {
        if !seen.insert((scene.id.as_str(), question.as_str())) {
            continue;
        }
        let line = DistillLine {
            scene: scene.context.clone(),
            question: question.clone(),
            label: verdict.label().to_string(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
        count += 1;
    }
    out.flush().map_err(io_err)?;
    Ok(DistillExport {
        path: path.to_path_buf(),
        count,
    })
}

/// LLM-answered, non-memoized condition checks in a trace, as export rows.
pub fn llm_checks(scene: &Scene, trace: &[TraceEvent]) -> Vec<(Scene, String, Tri)> {
    trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Checked {
                question,
                verdict,
                source: VerdictSource::Llm,
                ..
            } => Some((scene.clone(), question.clone(), *verdict)),
            _ => None,
        })
        .collect()
}
