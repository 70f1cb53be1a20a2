//! The `cprof` command line and its HTTP API.

pub mod backends;
pub mod commands;
pub mod config;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cprof_core::bench::Scenario;
use cprof_core::codifier::Granularity;
use cprof_core::responder::Mode;

use config::{ConfigError, NliBackendKind, OracleBackend, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cprof",
    version,
    about = "Codified character profiles: codify, evaluate, evolve, chat"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for all randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub benchmark: Option<PathBuf>,
    /// Directory holding versioned profile stores.
    #[arg(long, global = true)]
    pub profiles: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub oracle: Option<OracleBackend>,
    #[arg(long, global = true)]
    pub nli: Option<NliBackendKind>,
    #[arg(long, global = true)]
    pub k: Option<u64>,
    #[arg(long, global = true)]
    pub cot_budget: Option<u32>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Profile version to use instead of the latest.
    #[arg(long, global = true)]
    pub profile_version: Option<u64>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Basic,
    Evolving,
    Stochastic,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Basic => Scenario::Basic,
            ScenarioArg::Evolving => Scenario::Evolving,
            ScenarioArg::Stochastic => Scenario::Stochastic,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a profile JSON into a version-0 profile store.
    Codify {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        granularity: Option<Granularity>,
        /// Allow chance/choice constructs in the generated programs.
        #[arg(long)]
        randomness: bool,
    },
    /// Run a benchmark scenario and write records and a report.
    Eval {
        scenario: ScenarioArg,
        /// Run directory; defaults to <output>/<timestamp>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolving run that commits its revisions to the profile stores.
    Evolve {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Talk to a codified character on stdin/stdout.
    Chat {
        #[arg(long)]
        character: String,
        /// Print the decision trace after each response.
        #[arg(long)]
        trace: bool,
        /// Write the transcript as JSONL on exit.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Serve the chat and profile HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Export LLM-answered condition checks from run records.
    ExportDistill {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a report from records JSONL; `--k` selects Best@K.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

impl Overrides {
    /// The config file (or defaults) with these flags applied.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = &self.benchmark {
            cfg.paths.benchmark = v.clone();
        }
        if let Some(v) = &self.profiles {
            cfg.paths.profiles = v.clone();
        }
        if let Some(v) = self.mode {
            cfg.run.mode = v;
        }
        if let Some(v) = self.oracle {
            cfg.oracles.condition = v;
        }
        if let Some(v) = self.nli {
            cfg.oracles.nli = v;
        }
        if let Some(v) = self.k {
            cfg.run.k = v;
        }
        if let Some(v) = self.cot_budget {
            cfg.run.cot_budget = v;
        }
        if let Some(v) = self.workers {
            cfg.run.workers = v;
        }
        if let Some(v) = self.profile_version {
            cfg.run.version = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit codes: 0 clean, 1 some scenes failed, 2 bad usage or config,
/// 3 any other error.
pub fn run(cli: Cli) -> i32 {
    let cfg = match cli.overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match commands::dispatch(&cfg, cli.command, cli.overrides.k) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            3
        }
    }
}
