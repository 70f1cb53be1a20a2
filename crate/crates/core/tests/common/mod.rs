#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use cprof_core::bench::{BenchmarkSet, CharacterPrograms, RunDeps, RunSettings};
use cprof_core::codifier::{codify_profile, CodifyOptions, Granularity};
use cprof_core::evolver::{StoreMeta, VersionStore};
use cprof_core::llm::{LlmClient, RetryPolicy, ScriptedProvider};
use cprof_core::oracles::{NliJudge, TableConditionOracle, TableNli};
use cprof_core::responder::Mode;

pub fn miniverse_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../miniverse")
}

pub struct Miniverse {
    pub set: BenchmarkSet,
    pub provider: Arc<ScriptedProvider>,
    pub client: LlmClient,
    pub oracle: TableConditionOracle,
    pub nli: NliJudge,
}

impl Miniverse {
    pub fn load() -> Self {
        let dir = miniverse_dir();
        let provider = Arc::new(ScriptedProvider::load(&dir.join("script.json")).unwrap());
        let client = LlmClient::new(provider.clone()).with_retry(RetryPolicy::immediate());
        Miniverse {
            set: BenchmarkSet::load(&dir.join("benchmark.json")).unwrap(),
            provider,
            client,
            oracle: TableConditionOracle::load(&dir.join("conditions.json")).unwrap(),
            nli: NliJudge::new(TableNli::load(&dir.join("nli.json")).unwrap()),
        }
    }

    pub fn deps(&self) -> RunDeps<'_> {
        RunDeps {
            client: &self.client,
            oracle: &self.oracle,
            nli: &self.nli,
        }
    }

    /// Version-0 stores for every character, codified through the script.
    pub fn stores(&self) -> Vec<VersionStore> {
        self.set
            .characters
            .iter()
            .map(|c| {
                let opts = CodifyOptions::new("scripted").with_randomness(true);
                let report = codify_profile(&c.profile, Granularity::Paragraph, &self.client, &opts);
                assert!(report.failures.is_empty(), "{:?}", report.failures);
                let (meta, sources) = StoreMeta::from_codified(&c.character, &self.set.artifact, &report.segments);
                VersionStore::in_memory(meta, sources).unwrap()
            })
            .collect()
    }

    pub fn programs(&self) -> Vec<CharacterPrograms> {
        self.stores()
            .iter()
            .map(|s| CharacterPrograms::from_store(s, None).unwrap())
            .collect()
    }
}

pub fn settings(mode: Mode) -> RunSettings {
    let mut s = RunSettings::new(mode, "scripted");
    s.responder.base_seed = 7;
    s
}

/// The benchmark restricted to one character.
pub fn only(set: &BenchmarkSet, character: &str) -> BenchmarkSet {
    BenchmarkSet {
        artifact: set.artifact.clone(),
        characters: set
            .characters
            .iter()
            .filter(|c| c.character == character)
            .cloned()
            .collect(),
    }
}
