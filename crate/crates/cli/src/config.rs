//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use cprof_core::codifier::Granularity;
use cprof_core::responder::Mode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackend {
    Http,
    Scripted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleBackend {
    Llm,
    Table,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NliBackendKind {
    Llm,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub benchmark: PathBuf,
    pub profiles: PathBuf,
    pub output: PathBuf,
    pub cache: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            benchmark: "benchmark.json".into(),
            profiles: "profiles".into(),
            output: "runs".into(),
            cache: None,
            templates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Models {
    pub role_play: String,
    pub codify: String,
    pub oracle: String,
    pub judge: String,
}

impl Default for Models {
    fn default() -> Self {
        let model = std::env::var(cprof_core::llm::ENV_MODEL).unwrap_or_else(|_| "gpt-4.1".into());
        let oracle = std::env::var(cprof_core::llm::ENV_ORACLE_MODEL).unwrap_or_else(|_| model.clone());
        Self {
            role_play: model.clone(),
            codify: model.clone(),
            oracle,
            judge: model,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: LlmBackend,
    /// Script file for the scripted backend.
    pub script: Option<PathBuf>,
    pub concurrency: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            backend: LlmBackend::Http,
            script: None,
            concurrency: cprof_core::llm::DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub granularity: Granularity,
    pub mode: Mode,
    pub cot_budget: u32,
    pub k: u64,
    pub seed: u64,
    pub workers: usize,
    pub temperature: f64,
    pub include_randomness: bool,
    /// Profile version to evaluate; the latest when absent.
    pub version: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            granularity: Granularity::Paragraph,
            mode: Mode::Codified,
            cot_budget: 0,
            k: 4,
            seed: 0,
            workers: 4,
            temperature: 0.0,
            include_randomness: false,
            version: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub condition: OracleBackend,
    pub conditions: Option<PathBuf>,
    pub nli: NliBackendKind,
    pub nli_table: Option<PathBuf>,
    pub nli_include_scene: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            condition: OracleBackend::Llm,
            conditions: None,
            nli: NliBackendKind::Llm,
            nli_table: None,
            nli_include_scene: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub models: Models,
    pub llm: LlmSection,
    pub run: RunSection,
    pub oracles: OracleSection,
}

impl RunConfig {
    /// Loads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_against(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.benchmark);
        fix(&mut self.paths.profiles);
        fix(&mut self.paths.output);
        for p in [
            &mut self.paths.cache,
            &mut self.paths.templates,
            &mut self.llm.script,
            &mut self.oracles.conditions,
            &mut self.oracles.nli_table,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: &str| ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        };
        if self.run.workers == 0 {
            return Err(invalid("run.workers", "must be at least 1"));
        }
        if self.llm.concurrency == 0 {
            return Err(invalid("llm.concurrency", "must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.run.temperature) {
            return Err(invalid("run.temperature", "must be within [0, 2]"));
        }
        if self.llm.backend == LlmBackend::Scripted && self.llm.script.is_none() {
            return Err(invalid("llm.script", "required by the scripted backend"));
        }
        if self.oracles.condition == OracleBackend::Table && self.oracles.conditions.is_none() {
            return Err(invalid("oracles.conditions", "required by the table condition oracle"));
        }
        if self.oracles.nli == NliBackendKind::Table && self.oracles.nli_table.is_none() {
            return Err(invalid("oracles.nli_table", "required by the table NLI judge"));
        }
        Ok(())
    }
}
