use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cprof_core::bench::{
    read_records, render_report, run_basic, run_evolving, run_stochastic, score_run, BenchmarkSet, CharacterPrograms,
    RunDeps, RunOutput, RunSettings, Scenario,
};
use cprof_core::codifier::{codify_profile, CodifyOptions, Profile};
use cprof_core::evolver::{store_dir, ReviseOptions, StoreMeta, VersionStore};
use cprof_core::oracles::{export_distillation_data, llm_checks};
use cprof_core::responder::{ChatSession, Mode, ResponderConfig};

use crate::backends;
use crate::config::RunConfig;
use crate::Command;

/// Runs one command. `Ok(false)` means it finished but some scenes failed.
/// `k_flag` is `--k` as given on the command line, if at all.
pub fn dispatch(cfg: &RunConfig, command: Command, k_flag: Option<u64>) -> Result<bool> {
    match command {
        Command::Codify {
            profile,
            granularity,
            randomness,
        } => codify(
            cfg,
            &profile,
            granularity.unwrap_or(cfg.run.granularity),
            randomness || cfg.run.include_randomness,
        ),
        Command::Eval { scenario, out } => eval(cfg, scenario.into(), out, false),
        Command::Evolve { out } => eval(cfg, Scenario::Evolving, out, true),
        Command::Chat {
            character,
            trace,
            transcript,
        } => chat(cfg, &character, trace, transcript.as_deref()),
        Command::Serve { port, host } => crate::serve::serve(cfg, &host, port),
        Command::ExportDistill { records, out } => export_distill(cfg, &records, &out),
        Command::Report { records, json } => report(&records, k_flag.map(|k| k as usize), json),
    }
}

pub fn responder_config(cfg: &RunConfig) -> ResponderConfig {
    let mut r = ResponderConfig::new(&cfg.models.role_play);
    r.temperature = cfg.run.temperature;
    r.cot_budget = cfg.run.cot_budget;
    r.base_seed = cfg.run.seed;
    r
}

pub fn run_settings(cfg: &RunConfig) -> RunSettings {
    RunSettings {
        mode: cfg.run.mode,
        responder: responder_config(cfg),
        k: cfg.run.k,
        workers: cfg.run.workers,
        blame_model: cfg.models.judge.clone(),
        revise: ReviseOptions::new(&cfg.models.codify),
    }
}

fn codify(
    cfg: &RunConfig,
    profile_path: &Path,
    granularity: cprof_core::codifier::Granularity,
    randomness: bool,
) -> Result<bool> {
    let profile = Profile::load(profile_path).map_err(|e| anyhow!(e))?;
    let client = backends::client(cfg)?;
    let options = CodifyOptions::new(&cfg.models.codify).with_randomness(randomness);
    let report = codify_profile(&profile, granularity, &client, &options);
    let (meta, sources) = StoreMeta::from_codified(&profile.character, &profile.artifact, &report.segments);
    let store = VersionStore::create(&cfg.paths.profiles, meta, sources)?;
    let dir = store.dir().expect("created stores live on disk");
    let manifest = dir.join("codify.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&report.manifest)? + "\n")
        .with_context(|| manifest.display().to_string())?;
    println!(
        "codified {} segments of {} into {} ({} fell back to relevance wrappers)",
        report.segments.len(),
        profile.character,
        dir.display(),
        report.failures.len()
    );
    Ok(true)
}

fn open_stores(cfg: &RunConfig, set: &BenchmarkSet) -> Result<Vec<VersionStore>> {
    set.characters
        .iter()
        .map(|c| {
            VersionStore::open(&cfg.paths.profiles, &c.character).with_context(|| {
                format!(
                    "no profile store for {} under {}; run `cprof codify` first",
                    c.character,
                    cfg.paths.profiles.display()
                )
            })
        })
        .collect()
}

fn run_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    if let Some(out) = out {
        return out;
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut dir = cfg.paths.output.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = cfg.paths.output.join(format!("{stamp}-{n}"));
        n += 1;
    }
    dir
}

fn eval(cfg: &RunConfig, scenario: Scenario, out: Option<PathBuf>, persist: bool) -> Result<bool> {
    let set = BenchmarkSet::load(&cfg.paths.benchmark)?;
    let b = backends::build(cfg)?;
    let deps = RunDeps {
        client: &b.client,
        oracle: b.oracle.as_ref(),
        nli: &b.nli,
    };
    let mut settings = run_settings(cfg);
    if scenario == Scenario::Stochastic {
        settings.mode = Mode::Codified;
    }
    let needs_stores = match scenario {
        Scenario::Evolving => settings.mode != Mode::Textual,
        Scenario::Stochastic => true,
        Scenario::Basic => matches!(settings.mode, Mode::Codified | Mode::Ensemble),
    };
    let mut stores = if needs_stores {
        open_stores(cfg, &set)?
    } else {
        Vec::new()
    };
    if !persist {
        stores = stores.into_iter().map(VersionStore::detach).collect();
    }
    let programs = || -> Result<Vec<CharacterPrograms>> {
        stores
            .iter()
            .map(|s| CharacterPrograms::from_store(s, cfg.run.version).map_err(Into::into))
            .collect()
    };
    let mut output: RunOutput = match scenario {
        Scenario::Basic => run_basic(&set, &programs()?, &deps, &settings)?,
        Scenario::Stochastic => run_stochastic(&set, &programs()?, &deps, &settings)?,
        Scenario::Evolving => {
            if cfg.run.version.is_some() {
                bail!("evolving runs always start from the latest version");
            }
            run_evolving(&set, &mut stores, &deps, &settings)?
        }
    };
    output.report.metadata["config"] = serde_json::to_value(cfg)?;
    let dir = run_dir(cfg, out);
    output.write(&dir).with_context(|| dir.display().to_string())?;
    if !output.timeline.is_empty() {
        let path = dir.join("timeline.jsonl");
        let mut text = String::new();
        for e in &output.timeline {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        std::fs::write(&path, text).with_context(|| path.display().to_string())?;
    }
    print!("{}", render_report(&output.report));
    eprintln!("run written to {}", dir.display());
    if persist {
        for s in &stores {
            eprintln!("{}: now at version {}", s.character(), s.current().version);
        }
    }
    Ok(!output.report.has_failures())
}

fn chat(cfg: &RunConfig, character: &str, trace: bool, transcript: Option<&Path>) -> Result<bool> {
    let store = VersionStore::open(&cfg.paths.profiles, character).with_context(|| {
        format!(
            "no profile store at {}",
            store_dir(&cfg.paths.profiles, character).display()
        )
    })?;
    let programs = CharacterPrograms::from_store(&store, cfg.run.version)?;
    let client = backends::client(cfg)?;
    let oracle = backends::oracle(cfg, &client)?;
    let responder = responder_config(cfg);
    let mut session = ChatSession::new("cli", store.character(), programs.version, programs.programs);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let name = session.character.clone();
    let mut ok = true;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match session.turn(&line, oracle.as_ref(), &client, &responder) {
            Ok(turn) => {
                writeln!(stdout, "{name}: {}", turn.response)?;
                if trace {
                    for e in &turn.trace {
                        writeln!(stdout, "  {}", serde_json::to_string(&e.to_json())?)?;
                    }
                }
            }
            Err(e) => {
                ok = false;
                eprintln!("error: {e}");
            }
        }
        stdout.flush()?;
    }
    if let Some(path) = transcript {
        session
            .write_transcript(path)
            .with_context(|| path.display().to_string())?;
    }
    Ok(ok)
}

fn export_distill(cfg: &RunConfig, records_path: &Path, out: &Path) -> Result<bool> {
    let records = read_records(records_path).map_err(|e| anyhow!(e))?;
    let set = BenchmarkSet::load(&cfg.paths.benchmark)?;
    let scenes: HashMap<(&str, &str), _> = set
        .characters
        .iter()
        .flat_map(|c| c.scenes.iter().map(move |s| ((c.character.as_str(), s.id.as_str()), s)))
        .collect();
    let mut rows = Vec::new();
    for r in &records {
        let scene = scenes
            .get(&(r.character.as_str(), r.scene_id.as_str()))
            .ok_or_else(|| anyhow!("record for unknown scene {} of {}", r.scene_id, r.character))?;
        rows.extend(llm_checks(scene, &r.trace));
    }
    let export = export_distillation_data(&rows, out)?;
    println!("{} labeled checks written to {}", export.count, export.path.display());
    Ok(true)
}

fn report(records_path: &Path, k: Option<usize>, json: bool) -> Result<bool> {
    let records = read_records(records_path).map_err(|e| anyhow!(e))?;
    if k == Some(0) {
        bail!("--k must be at least 1");
    }
    let report = score_run(&records, k);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", render_report(&report));
    }
    Ok(!report.has_failures())
}
