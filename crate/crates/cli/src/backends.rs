use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use cprof_core::llm::{HttpProvider, LlmClient, LlmProvider, ScriptedProvider, TemplateSet, ENV_BASE_URL};
use cprof_core::oracles::{
    ConditionOracle, LlmConditionOracle, LlmNli, NliJudge, RemoteConditionOracle, TableConditionOracle, TableNli,
    ENV_REMOTE_CHECKER_URL,
};

use crate::config::{LlmBackend, NliBackendKind, OracleBackend, RunConfig};

/// Everything a command needs to talk to models and judges.
pub struct Backends {
    pub client: Arc<LlmClient>,
    pub oracle: Arc<dyn ConditionOracle>,
    pub nli: NliJudge,
}

pub fn client(cfg: &RunConfig) -> Result<Arc<LlmClient>> {
    let provider: Arc<dyn LlmProvider> = match cfg.llm.backend {
        LlmBackend::Scripted => {
            let path = cfg
                .llm
                .script
                .as_ref()
                .ok_or_else(|| anyhow!("llm.script is not set"))?;
            Arc::new(ScriptedProvider::load(path).with_context(|| format!("loading script {}", path.display()))?)
        }
        LlmBackend::Http => {
            Arc::new(HttpProvider::from_env().ok_or_else(|| anyhow!("set {ENV_BASE_URL} to use the http backend"))?)
        }
    };
    let mut client = LlmClient::new(provider).with_concurrency(cfg.llm.concurrency);
    if let Some(dir) = &cfg.paths.templates {
        client = client.with_templates(TemplateSet::with_overrides(dir)?);
    }
    if let Some(dir) = &cfg.paths.cache {
        client = client.with_cache_dir(dir);
    }
    Ok(Arc::new(client))
}

pub fn oracle(cfg: &RunConfig, client: &Arc<LlmClient>) -> Result<Arc<dyn ConditionOracle>> {
    Ok(match cfg.oracles.condition {
        OracleBackend::Llm => Arc::new(LlmConditionOracle::new(client.clone(), &cfg.models.oracle)),
        OracleBackend::Table => {
            let path = cfg
                .oracles
                .conditions
                .as_ref()
                .ok_or_else(|| anyhow!("oracles.conditions is not set"))?;
            Arc::new(TableConditionOracle::load(path).map_err(|e| anyhow!(e))?)
        }
        OracleBackend::Remote => Arc::new(
            RemoteConditionOracle::from_env()
                .ok_or_else(|| anyhow!("set {ENV_REMOTE_CHECKER_URL} to use the remote oracle"))?,
        ),
    })
}

pub fn nli(cfg: &RunConfig, client: &Arc<LlmClient>) -> Result<NliJudge> {
    Ok(match cfg.oracles.nli {
        NliBackendKind::Llm => {
            NliJudge::new(LlmNli::new(client.clone(), &cfg.models.judge).include_scene(cfg.oracles.nli_include_scene))
        }
        NliBackendKind::Table => {
            let path = cfg
                .oracles
                .nli_table
                .as_ref()
                .ok_or_else(|| anyhow!("oracles.nli_table is not set"))?;
            NliJudge::new(TableNli::load(path).map_err(|e| anyhow!(e))?)
        }
    })
}

pub fn build(cfg: &RunConfig) -> Result<Backends> {
    let client = client(cfg)?;
    Ok(Backends {
        oracle: oracle(cfg, &client)?,
        nli: nli(cfg, &client)?,
        client,
    })
}
