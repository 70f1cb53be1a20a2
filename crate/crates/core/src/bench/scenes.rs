use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::record::Tier;
use super::BenchError;
use crate::codifier::{Profile, Segment};
use crate::engine::Scene;
use crate::llm::{GenerationConfig, LlmClient};

/// Manifest file tying profiles and scenes together.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct BenchmarkManifest {
    pub artifact: String,
    /// Scene JSONL, relative to the manifest.
    pub scenes: String,
    pub characters: Vec<CharacterEntry>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct CharacterEntry {
    pub character: String,
    pub tier: Tier,
    /// Profile JSON, relative to the manifest.
    pub profile: String,
}

#[derive(Clone, Debug)]
pub struct CharacterBench {
    pub character: String,
    pub tier: Tier,
    pub profile: Profile,
    pub profile_path: PathBuf,
    pub scenes: Vec<Scene>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkSet {
    pub artifact: String,
    pub characters: Vec<CharacterBench>,
}

impl BenchmarkSet {
    pub fn load(manifest_path: &Path) -> Result<Self, BenchError> {
        let read =
            |p: &Path| std::fs::read_to_string(p).map_err(|e| BenchError::Input(format!("{}: {e}", p.display())));
        let manifest: BenchmarkManifest = serde_json::from_str(&read(manifest_path)?)
            .map_err(|e| BenchError::Input(format!("{}: {e}", manifest_path.display())))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let scenes_path = base.join(&manifest.scenes);
        let mut all = Vec::new();
        for (n, line) in read(&scenes_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let scene: Scene = serde_json::from_str(line)
                .map_err(|e| BenchError::Input(format!("{} line {}: {e}", scenes_path.display(), n + 1)))?;
            all.push(scene);
        }
        let mut characters = Vec::new();
        for entry in manifest.characters {
            let profile_path = base.join(&entry.profile);
            let profile = Profile::load(&profile_path).map_err(BenchError::Input)?;
            let scenes: Vec<Scene> = all.iter().filter(|s| s.character == entry.character).cloned().collect();
            characters.push(CharacterBench {
                character: entry.character,
                tier: entry.tier,
                profile,
                profile_path,
                scenes,
            });
        }
        let set = BenchmarkSet {
            artifact: manifest.artifact,
            characters,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        for c in &self.characters {
            let mut ids = HashSet::new();
            for s in &c.scenes {
                if !ids.insert(s.id.as_str()) {
                    return Err(BenchError::Input(format!(
                        "duplicate scene id {} for {}",
                        s.id, c.character
                    )));
                }
                if s.context.trim().is_empty() {
                    return Err(BenchError::Input(format!("scene {} has empty context", s.id)));
                }
            }
            if c.scenes.windows(2).any(|w| w[0].order_index >= w[1].order_index) {
                return Err(BenchError::Input(format!(
                    "scenes for {} are not sorted by order_index",
                    c.character
                )));
            }
        }
        Ok(())
    }

    pub fn character(&self, name: &str) -> Option<&CharacterBench> {
        self.characters.iter().find(|c| c.character == name)
    }

    pub fn scene_count(&self) -> usize {
        self.characters.iter().map(|c| c.scenes.len()).sum()
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn content_words(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 6)
        .map(str::to_lowercase)
        .collect()
}

/// Words of six or more letters shared by the question and the reference.
pub fn question_leaks(question: &str, reference: &str) -> Vec<String> {
    let r = content_words(reference);
    let mut shared: Vec<String> = content_words(question).into_iter().filter(|w| r.contains(w)).collect();
    shared.sort();
    shared
}

fn clean_line(line: &str) -> &str {
    let line = line.trim();
    let line = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .unwrap_or(line);
    line.trim()
}

/// Extracts action sentences for `character` from an episode summary and
/// turns each into a scene whose context is the text before it.
pub fn build_scenes(
    summary: &str,
    character: &str,
    artifact: &str,
    first_order: u64,
    client: &LlmClient,
    model: &str,
) -> Result<Vec<Scene>, BenchError> {
    if summary.trim().is_empty() {
        return Err(BenchError::Precondition("summary is empty".into()));
    }
    let cfg = GenerationConfig::greedy(model, 512);
    let reply = client.complete("scene_extract", &[("character", character), ("summary", summary)], &cfg)?;

    let mut found: Vec<(usize, &str)> = Vec::new();
    for line in reply.completion.lines().map(clean_line).filter(|l| !l.is_empty()) {
        match summary.find(line) {
            Some(pos) if found.iter().all(|(p, _)| *p != pos) => found.push((pos, line)),
            Some(_) => {}
            None => warn!(line, "extracted sentence is not verbatim in the summary; dropped"),
        }
    }
    found.sort_by_key(|(p, _)| *p);

    let mut scenes = Vec::new();
    for (pos, sentence) in found {
        let context = summary[..pos].trim();
        if context.is_empty() {
            warn!(sentence, "action has no preceding context; dropped");
            continue;
        }
        let order_index = first_order + scenes.len() as u64;
        let q = client.complete(
            "guiding_question",
            &[("character", character), ("context", context), ("reference", sentence)],
            &GenerationConfig::greedy(model, 64),
        )?;
        let mut question = q
            .completion
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_string();
        if question.is_empty() {
            question = format!("What does {character} do next?");
        }
        let leaks = question_leaks(&question, sentence);
        if !leaks.is_empty() {
            warn!(
                question,
                ?leaks,
                "guiding question shares words with the reference action"
            );
        }
        scenes.push(Scene {
            id: format!("{}-{}-{}", slug(artifact), slug(character), order_index),
            artifact: artifact.to_string(),
            character: character.to_string(),
            order_index,
            context: context.to_string(),
            question,
            reference_action: Some(sentence.to_string()),
        });
    }
    if scenes.is_empty() {
        warn!(character, "no scenes extracted");
    }
    Ok(scenes)
}

#[derive(Clone, Debug)]
pub struct SpoilerOutcome {
    pub profile: Profile,
    pub removed: Vec<String>,
}

fn parse_flagged(reply: &str, segments: &[Segment]) -> Vec<String> {
    let known: HashSet<&str> = segments.iter().map(|s| s.id.as_str()).collect();
    let mut out: Vec<String> = Vec::new();
    for tok in reply.split(|c: char| !c.is_ascii_alphanumeric()) {
        if known.contains(tok) && !out.iter().any(|o| o == tok) {
            out.push(tok.to_string());
        }
    }
    out
}

/// Drops profile segments that describe events after `cutoff_order`.
///
/// Segment ids of the remaining segments are kept. If the model fails the
/// profile comes back unchanged.
pub fn filter_spoilers(
    profile: &Profile,
    cutoff_order: u64,
    client: &LlmClient,
    model: &str,
    allow_aggressive: bool,
) -> Result<SpoilerOutcome, BenchError> {
    if profile.segments.is_empty() {
        return Err(BenchError::Precondition("profile is not segmented".into()));
    }
    let listing: String = profile
        .segments
        .iter()
        .map(|s| format!("{}: {}\n", s.id, s.text.trim()))
        .collect();
    let cutoff = cutoff_order.to_string();
    let reply = match client.complete(
        "spoiler_filter",
        &[
            ("cutoff", &cutoff),
            ("character", &profile.character),
            ("segments", &listing),
        ],
        &GenerationConfig::greedy(model, 128),
    ) {
        Ok(r) => r,
        Err(e) => {
            warn!("spoiler filter unavailable, keeping the profile unfiltered: {e}");
            return Ok(SpoilerOutcome {
                profile: profile.clone(),
                removed: Vec::new(),
            });
        }
    };
    let flagged = parse_flagged(&reply.completion, &profile.segments);
    if flagged.len() * 2 > profile.segments.len() && !allow_aggressive {
        return Err(BenchError::OverAggressiveFilter {
            flagged: flagged.len(),
            total: profile.segments.len(),
        });
    }
    let segments: Vec<Segment> = profile
        .segments
        .iter()
        .filter(|s| !flagged.contains(&s.id))
        .cloned()
        .collect();
    if !flagged.is_empty() {
        info!(character = %profile.character, removed = ?flagged, "spoiler segments removed");
    }
    let text = if flagged.is_empty() {
        profile.text.clone()
    } else {
        segments.iter().map(|s| s.text.trim()).collect::<Vec<_>>().join("\n\n")
    };
    Ok(SpoilerOutcome {
        profile: Profile {
            character: profile.character.clone(),
            artifact: profile.artifact.clone(),
            text,
            segments,
        },
        removed: flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codifier::Granularity;
    use crate::llm::{RetryPolicy, ScriptRule, ScriptedProvider};
    use std::sync::Arc;

    fn client(rules: Vec<ScriptRule>) -> LlmClient {
        LlmClient::new(Arc::new(ScriptedProvider::from_rules(rules))).with_retry(RetryPolicy::immediate())
    }

    const SUMMARY: &str = "Mira reaches the gate. Guards block the road. Mira climbs the wall. She waves goodbye.";

    #[test]
    fn extracted_sentence_gets_preceding_context() {
        let c = client(vec![
            ScriptRule::reply(&["word for word"], "Mira climbs the wall."),
            ScriptRule::reply(&["short question"], "How does Mira deal with the blocked road?"),
        ]);
        let scenes = build_scenes(SUMMARY, "Mira", "Tale", 0, &c, "m").unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].context, "Mira reaches the gate. Guards block the road.");
        assert_eq!(scenes[0].reference_action.as_deref(), Some("Mira climbs the wall."));
        assert_eq!(scenes[0].question, "How does Mira deal with the blocked road?");
    }

    #[test]
    fn paraphrases_are_dropped_and_order_increases() {
        let c = client(vec![
            ScriptRule::reply(
                &["word for word"],
                "She waves goodbye.\nMira scales the wall.\nMira climbs the wall.",
            ),
            ScriptRule::reply(&["short question"], "What next?"),
        ]);
        let scenes = build_scenes(SUMMARY, "Mira", "Tale", 5, &c, "m").unwrap();
        assert_eq!(scenes.len(), 2);
        assert_eq!(scenes[0].reference_action.as_deref(), Some("Mira climbs the wall."));
        assert_eq!(scenes[0].order_index, 5);
        assert_eq!(scenes[1].order_index, 6);
        assert_eq!(scenes[0].id, "tale-mira-5");
    }

    #[test]
    fn leak_heuristic() {
        assert_eq!(
            question_leaks("Does Mira climb anything?", "Mira climbs the wall."),
            Vec::<String>::new()
        );
        assert_eq!(
            question_leaks("Where is the castle?", "She storms the castle."),
            ["castle"]
        );
    }

    fn three_segments() -> Profile {
        Profile {
            character: "Mira".into(),
            artifact: "Tale".into(),
            text: "Mira is brave.\n\nMira later becomes queen.\n\nMira likes tea.\n".into(),
            segments: Vec::new(),
        }
        .segmented(Granularity::Paragraph)
    }

    #[test]
    fn flagged_segment_is_removed() {
        let c = client(vec![ScriptRule::reply(&["ids of segments"], "seg2")]);
        let out = filter_spoilers(&three_segments(), 1, &c, "m", false).unwrap();
        assert_eq!(out.removed, ["seg2"]);
        assert_eq!(
            out.profile.segments.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            ["seg1", "seg3"]
        );
        assert!(!out.profile.text.contains("queen"));
    }

    #[test]
    fn nothing_flagged_is_identity() {
        let c = client(vec![ScriptRule::reply(&["ids of segments"], "none")]);
        let p = three_segments();
        let out = filter_spoilers(&p, 1, &c, "m", false).unwrap();
        assert_eq!(out.profile, p);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn over_aggressive_filter_needs_override() {
        let p = Profile {
            character: "Mira".into(),
            artifact: String::new(),
            text: "a.\n\nb.\n\nc.\n\nd.\n".into(),
            segments: Vec::new(),
        }
        .segmented(Granularity::Paragraph);
        let c = client(vec![ScriptRule::reply(&["ids of segments"], "seg1, seg2, seg3, seg4")]);
        let err = filter_spoilers(&p, 0, &c, "m", false).unwrap_err();
        assert!(matches!(err, BenchError::OverAggressiveFilter { flagged: 4, total: 4 }));
        assert!(filter_spoilers(&p, 0, &c, "m", true)
            .unwrap()
            .profile
            .segments
            .is_empty());
    }

    #[test]
    fn llm_failure_leaves_profile_unfiltered() {
        let c = client(vec![]);
        let p = three_segments();
        assert_eq!(filter_spoilers(&p, 1, &c, "m", false).unwrap().profile, p);
    }
}
