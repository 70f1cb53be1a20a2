//! Folding evaluation records into a report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::record::{EvalRecord, Tier};
use crate::oracles::{PreferenceVerdict, Winner};
use crate::responder::Mode;

/// Maximum of the first `k` scores, or `None` if there are fewer than `k`
/// (or `k` is zero).
pub fn best_at_k(scores: &[u8], k: usize) -> Option<u8> {
    if k == 0 || scores.len() < k {
        return None;
    }
    scores[..k].iter().copied().max()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SceneKey {
    pub character: String,
    pub mode: Mode,
    pub scene_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub name: String,
    pub mode: Mode,
    pub scenes: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterScore {
    pub character: String,
    pub artifact: String,
    pub tier: Tier,
    pub mode: Mode,
    pub scenes: usize,
    pub mean: f64,
    pub forward_passes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTally {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
    /// Ties caused by the two presentation orders disagreeing.
    pub order_inconsistent: usize,
}

impl PreferenceTally {
    pub fn add(&mut self, v: &PreferenceVerdict) {
        match v.winner {
            Winner::A => self.win += 1,
            Winner::B => self.loss += 1,
            Winner::Tie => self.tie += 1,
        }
        if !v.order_consistent {
            self.order_inconsistent += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub k: Option<usize>,
    pub characters: Vec<CharacterScore>,
    pub artifacts: Vec<GroupScore>,
    pub tiers: Vec<GroupScore>,
    pub overall: Vec<GroupScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub best_at_k: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferenceTally>,
    pub forward_passes: u64,
    pub records: usize,
    pub failed_records: usize,
    pub incomplete: Vec<SceneKey>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Report {
    pub fn has_failures(&self) -> bool {
        self.failed_records > 0 || !self.incomplete.is_empty()
    }

    pub fn character_mean(&self, character: &str) -> Option<f64> {
        self.characters
            .iter()
            .find(|c| c.character == character)
            .map(|c| c.mean)
    }
}

struct SceneScore<'a> {
    first: &'a EvalRecord,
    /// Scores in k_index order.
    scores: Vec<u8>,
    complete: bool,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = xs.into_iter().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Pure fold over records. Without `k` each scene scores its first record;
/// with `k` it scores the best of its first `k`. Scenes lacking enough
/// scored records are listed as incomplete and left out of every mean.
pub fn score_run(records: &[EvalRecord], k: Option<usize>) -> Report {
    let need = k.unwrap_or(1).max(1);
    let mut scenes: BTreeMap<SceneKey, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        scenes
            .entry(SceneKey {
                character: r.character.clone(),
                mode: r.mode,
                scene_id: r.scene_id.clone(),
            })
            .or_default()
            .push(r);
    }

    let mut scored: BTreeMap<SceneKey, SceneScore> = BTreeMap::new();
    let mut incomplete = Vec::new();
    for (key, mut recs) in scenes {
        recs.sort_by_key(|r| r.k_index.unwrap_or(0));
        let valid: Vec<&EvalRecord> = recs.iter().copied().filter(|r| !r.is_failure()).collect();
        let prefix_ok = recs.len() >= need && recs[..need].iter().all(|r| !r.is_failure());
        let scores = valid.iter().map(|r| r.nli.unwrap().score).collect();
        if !prefix_ok {
            incomplete.push(key.clone());
        }
        scored.insert(
            key,
            SceneScore {
                first: recs[0],
                scores,
                complete: prefix_ok,
            },
        );
    }

    let complete: Vec<(&SceneKey, &SceneScore)> = scored.iter().filter(|(_, s)| s.complete).collect();
    let scene_value = |s: &SceneScore| best_at_k(&s.scores, need).unwrap() as f64;

    let mut by_char: BTreeMap<(String, Mode), Vec<f64>> = BTreeMap::new();
    let mut by_artifact: BTreeMap<(String, Mode), Vec<f64>> = BTreeMap::new();
    let mut by_tier: BTreeMap<(Tier, Mode), Vec<f64>> = BTreeMap::new();
    let mut by_mode: BTreeMap<Mode, Vec<f64>> = BTreeMap::new();
    for (key, s) in &complete {
        let v = scene_value(s);
        by_char.entry((key.character.clone(), key.mode)).or_default().push(v);
        by_artifact
            .entry((s.first.artifact.clone(), key.mode))
            .or_default()
            .push(v);
        by_tier.entry((s.first.tier, key.mode)).or_default().push(v);
        by_mode.entry(key.mode).or_default().push(v);
    }

    let mut passes: BTreeMap<(String, Mode), u64> = BTreeMap::new();
    for r in records {
        *passes.entry((r.character.clone(), r.mode)).or_default() += r.forward_passes;
    }

    let mut characters = Vec::new();
    let mut seen_chars: BTreeMap<(String, Mode), &EvalRecord> = BTreeMap::new();
    for r in records {
        seen_chars.entry((r.character.clone(), r.mode)).or_insert(r);
    }
    for ((character, mode), first) in &seen_chars {
        let (n, m) = mean(by_char.get(&(character.clone(), *mode)).cloned().unwrap_or_default());
        characters.push(CharacterScore {
            character: character.clone(),
            artifact: first.artifact.clone(),
            tier: first.tier,
            mode: *mode,
            scenes: n,
            mean: m,
            forward_passes: passes[&(character.clone(), *mode)],
        });
    }

    let group = |name: String, mode: Mode, xs: &Vec<f64>| {
        let (n, m) = mean(xs.iter().copied());
        GroupScore {
            name,
            mode,
            scenes: n,
            mean: m,
        }
    };
    let artifacts = by_artifact
        .iter()
        .map(|((a, m), xs)| group(a.clone(), *m, xs))
        .collect();
    let tiers = by_tier
        .iter()
        .map(|((t, m), xs)| group(t.as_str().to_string(), *m, xs))
        .collect();
    let overall = by_mode.iter().map(|(m, xs)| group("all".into(), *m, xs)).collect();

    let best_at_k_curve = match k {
        Some(k) if k >= 1 => (1..=k)
            .map(|kk| CurvePoint {
                k: kk,
                mean: mean(complete.iter().map(|(_, s)| best_at_k(&s.scores, kk).unwrap() as f64)).1,
            })
            .collect(),
        _ => Vec::new(),
    };

    Report {
        k,
        characters,
        artifacts,
        tiers,
        overall,
        best_at_k: best_at_k_curve,
        preference: None,
        forward_passes: records.iter().map(|r| r.forward_passes).sum(),
        records: records.len(),
        failed_records: records.iter().filter(|r| r.is_failure()).count(),
        incomplete,
        metadata: serde_json::Value::Null,
    }
}

/// Plain-text table: one row per character, then artifact, tier and overall
/// averages.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    let title = match report.k {
        Some(k) => format!("Best@{k}"),
        None => "Score".to_string(),
    };
    let _ = writeln!(
        out,
        "{:<16} {:<6} {:<13} {:>6} {:>8} {:>8}",
        "Character", "Tier", "Mode", "Scenes", title, "Passes"
    );
    let _ = writeln!(out, "{}", "-".repeat(62));
    for c in &report.characters {
        let _ = writeln!(
            out,
            "{:<16} {:<6} {:<13} {:>6} {:>8.2} {:>8}",
            c.character,
            c.tier.as_str(),
            c.mode.as_str(),
            c.scenes,
            c.mean,
            c.forward_passes
        );
    }
    let _ = writeln!(out, "{}", "-".repeat(62));
    for g in report.artifacts.iter().chain(&report.tiers).chain(&report.overall) {
        let name = if g.name == "all" {
            "Average".to_string()
        } else {
            g.name.clone()
        };
        let _ = writeln!(
            out,
            "{:<23} {:<13} {:>6} {:>8.2}",
            name,
            g.mode.as_str(),
            g.scenes,
            g.mean
        );
    }
    if !report.best_at_k.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<6} {:>8}", "K", "Best@K");
        for p in &report.best_at_k {
            let _ = writeln!(out, "{:<6} {:>8.2}", p.k, p.mean);
        }
    }
    if let Some(p) = &report.preference {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Preference: win {} / tie {} / loss {} ({} order-inconsistent)",
            p.win, p.tie, p.loss, p.order_inconsistent
        );
    }
    if !report.incomplete.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Incomplete scenes (excluded):");
        for k in &report.incomplete {
            let _ = writeln!(out, "  {} {} {}", k.character, k.mode.as_str(), k.scene_id);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{} records, {} failed, {} forward passes",
        report.records, report.failed_records, report.forward_passes
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Scene;
    use crate::oracles::{NliRelation, NliVerdict};

    pub(crate) fn rec(character: &str, tier: Tier, scene: &str, score: Option<u8>, k: Option<u64>) -> EvalRecord {
        let header = super::super::record::RecordHeader {
            character: character.into(),
            artifact: "art".into(),
            tier,
        };
        let s = Scene::live(scene, character, "ctx");
        let mut r = EvalRecord::failed(&header, &s, Mode::Codified, 0, k, "x".into());
        if let Some(sc) = score {
            r.error = None;
            r.nli = Some(NliVerdict::new(NliRelation::from_score(sc).unwrap()));
            r.response = "r".into();
            r.forward_passes = 1;
        }
        r
    }

    #[test]
    fn best_at_k_is_prefix_max() {
        assert_eq!(best_at_k(&[0, 50, 100], 2), Some(50));
        assert_eq!(best_at_k(&[0, 50, 100], 3), Some(100));
        assert_eq!(best_at_k(&[0, 50, 100], 4), None);
        assert_eq!(best_at_k(&[50], 0), None);
    }

    #[test]
    fn fixture_arithmetic() {
        let records = vec![
            rec("ayla", Tier::Main, "a1", Some(100), None),
            rec("ayla", Tier::Main, "a2", Some(50), None),
            rec("ayla", Tier::Main, "a3", Some(100), None),
            rec("ayla", Tier::Main, "a4", Some(0), None),
            rec("bo", Tier::Minor, "b1", Some(100), None),
        ];
        let r = score_run(&records, None);
        assert_eq!(r.character_mean("ayla"), Some(62.5));
        assert_eq!(
            r.tiers.iter().map(|g| (g.name.as_str(), g.mean)).collect::<Vec<_>>(),
            [("MAIN", 62.5), ("MINOR", 100.0)]
        );
        assert_eq!(r.overall[0].mean, 70.0);
        assert!(!r.has_failures());
        assert!(render_report(&r).contains("62.50"));
    }

    #[test]
    fn failed_scenes_are_excluded_not_zeroed() {
        let records = vec![
            rec("a", Tier::Main, "s1", Some(100), None),
            rec("a", Tier::Main, "s2", None, None),
        ];
        let r = score_run(&records, None);
        assert_eq!(r.character_mean("a"), Some(100.0));
        assert_eq!(r.incomplete.len(), 1);
        assert_eq!(r.incomplete[0].scene_id, "s2");
        assert!(r.has_failures());
    }

    #[test]
    fn best_at_k_report_uses_first_k_in_k_order() {
        let records = vec![
            rec("a", Tier::Main, "s1", Some(100), Some(2)),
            rec("a", Tier::Main, "s1", Some(0), Some(0)),
            rec("a", Tier::Main, "s1", Some(50), Some(1)),
        ];
        let r = score_run(&records, Some(2));
        assert_eq!(r.character_mean("a"), Some(50.0));
        assert_eq!(r.best_at_k.iter().map(|p| p.mean).collect::<Vec<_>>(), [0.0, 50.0]);
        let r = score_run(&records, Some(3));
        assert_eq!(r.character_mean("a"), Some(100.0));
        let r = score_run(&records, Some(4));
        assert_eq!(r.incomplete.len(), 1);
    }

    #[test]
    fn preference_tally_counts() {
        let mut t = PreferenceTally::default();
        t.add(&PreferenceVerdict {
            winner: Winner::A,
            order_consistent: true,
        });
        t.add(&PreferenceVerdict {
            winner: Winner::Tie,
            order_consistent: false,
        });
        t.add(&PreferenceVerdict {
            winner: Winner::B,
            order_consistent: true,
        });
        assert_eq!(
            t,
            PreferenceTally {
                win: 1,
                tie: 1,
                loss: 1,
                order_inconsistent: 1
            }
        );
    }
}
