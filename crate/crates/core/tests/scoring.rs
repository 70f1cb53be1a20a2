use cprof_core::bench::best_at_k;
use cprof_core::oracles::{
    NliJudge, NliRelation, NliVerdict, OracleError, PreferenceBackend, PreferenceJudge, Shown, TableNli, Winner,
};
use proptest::prelude::*;

#[test]
fn nli_mapping_is_fixed() {
    let pairs: Vec<(NliRelation, u8)> = NliRelation::ALL.iter().map(|r| (*r, r.score())).collect();
    assert_eq!(
        pairs,
        [
            (NliRelation::Entailed, 100),
            (NliRelation::Neutral, 50),
            (NliRelation::Contradicted, 0)
        ]
    );
    for r in NliRelation::ALL {
        assert_eq!(NliVerdict::new(r).score, r.score());
        assert_eq!(NliRelation::from_score(r.score()), Some(r));
    }
    // a serialized verdict whose score disagrees with its relation is rejected
    assert!(serde_json::from_str::<NliVerdict>(r#"{"relation":"neutral","score":100}"#).is_err());
}

#[test]
fn identical_response_is_entailed_and_table_miss_is_neutral() {
    let judge = NliJudge::new(TableNli::default());
    assert_eq!(judge.judge("s", "Ayla runs.", "Ayla runs.").unwrap().score, 100);
    assert_eq!(judge.judge("s", "Ayla runs.", "Ayla sits.").unwrap().score, 50);
}

fn brute_force(scores: &[u8], k: usize) -> u8 {
    let mut best = 0;
    for s in scores.iter().take(k) {
        if *s > best {
            best = *s;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn best_at_k_is_prefix_max_and_monotone(
        scores in prop::collection::vec(prop::sample::select(vec![0u8, 50, 100]), 1..20)
    ) {
        let mut prev = 0;
        for k in 1..=scores.len() {
            let got = best_at_k(&scores, k).unwrap();
            prop_assert_eq!(got, brute_force(&scores, k));
            prop_assert!(got >= prev);
            prev = got;
        }
        prop_assert_eq!(best_at_k(&scores, 1), Some(scores[0]));
        // too few samples for K is undefined, not a smaller max
        prop_assert_eq!(best_at_k(&scores, scores.len() + 1), None);
        prop_assert_eq!(best_at_k(&scores, 0), None);
    }
}

#[test]
fn best_at_k_of_nothing_is_none() {
    assert_eq!(best_at_k(&[], 3), None);
}

/// Always prefers the response that mentions the reference's first word.
struct Consistent;
impl PreferenceBackend for Consistent {
    fn prefer(&self, _: &str, reference: &str, first: &str, second: &str) -> Result<Option<Shown>, OracleError> {
        let key = reference.split_whitespace().next().unwrap();
        Ok(Some(match (first.contains(key), second.contains(key)) {
            (true, false) => Shown::First,
            (false, true) => Shown::Second,
            _ => Shown::Tie,
        }))
    }
}

/// Prefers whatever is shown first.
struct FirstBiased;
impl PreferenceBackend for FirstBiased {
    fn prefer(&self, _: &str, _: &str, _: &str, _: &str) -> Result<Option<Shown>, OracleError> {
        Ok(Some(Shown::First))
    }
}

#[test]
fn consistent_judge_is_order_invariant() {
    let judge = PreferenceJudge::new(Consistent);
    let good = "Ayla chases the thief.";
    let bad = "Brann sleeps.";
    let ab = judge.judge("scene", "Ayla chases", good, bad).unwrap();
    let ba = judge.judge("scene", "Ayla chases", bad, good).unwrap();
    assert_eq!(ab.winner, Winner::A);
    assert_eq!(ba.winner, Winner::B);
    assert!(ab.order_consistent && ba.order_consistent);
}

#[test]
fn position_biased_judge_ties() {
    let judge = PreferenceJudge::new(FirstBiased);
    let v = judge
        .judge("scene", "Ayla chases", "Ayla chases the thief.", "Brann sleeps.")
        .unwrap();
    assert_eq!(v.winner, Winner::Tie);
    assert!(!v.order_consistent);
}
