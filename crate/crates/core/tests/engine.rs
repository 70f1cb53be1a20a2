use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use cprof_core::dsl::{parse, Expr};
use cprof_core::engine::{eval_expr, execute_profile, RandomStream, RunSeed, Scene, TraceEvent, Tri};
use cprof_core::oracles::{ConditionOracle, ConditionVerdict, OracleError, TableConditionOracle, VerdictSource};

/// Answers "A?" and "B?" from fixed values and counts every call.
struct Counting {
    a: Tri,
    b: Tri,
    calls: AtomicUsize,
}

impl Counting {
    fn new(a: Tri, b: Tri) -> Self {
        Self {
            a,
            b,
            calls: AtomicUsize::new(0),
        }
    }
}

impl ConditionOracle for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn check_condition(&self, _: &Scene, question: &str) -> Result<ConditionVerdict, OracleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let verdict = match question {
            "A?" => self.a,
            "B?" => self.b,
            other => panic!("unexpected question {other}"),
        };
        Ok(ConditionVerdict {
            verdict,
            source: VerdictSource::Table,
            raw_label: String::new(),
            cached: false,
        })
    }
}

// Truth order F < U < T: and is min, or is max, not reverses.
fn rank(t: Tri) -> u8 {
    match t {
        Tri::False => 0,
        Tri::Unknown => 1,
        Tri::True => 2,
    }
}

fn oracle_and(a: Tri, b: Tri) -> Tri {
    if rank(a) <= rank(b) {
        a
    } else {
        b
    }
}

fn oracle_or(a: Tri, b: Tri) -> Tri {
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

fn oracle_not(a: Tri) -> Tri {
    match a {
        Tri::True => Tri::False,
        Tri::False => Tri::True,
        Tri::Unknown => Tri::Unknown,
    }
}

fn eval(e: &Expr, o: &Counting) -> (Tri, Vec<TraceEvent>) {
    let scene = Scene::live("s", "X", "ctx");
    eval_expr(e, &scene, o, &mut RandomStream::from_seed(0)).unwrap()
}

#[test]
fn not_truth_table() {
    for a in Tri::ALL {
        let o = Counting::new(a, Tri::Unknown);
        let (v, _) = eval(&Expr::not(Expr::check("A?")), &o);
        assert_eq!(v, oracle_not(a), "not {a:?}");
        assert_eq!(o.calls.load(Ordering::SeqCst), 1);
    }
}

#[test]
fn and_truth_table_and_short_circuit() {
    for a in Tri::ALL {
        for b in Tri::ALL {
            let o = Counting::new(a, b);
            let (v, trace) = eval(&Expr::and(Expr::check("A?"), Expr::check("B?")), &o);
            assert_eq!(v, oracle_and(a, b), "{a:?} and {b:?}");
            let expected_calls = if a == Tri::False { 1 } else { 2 };
            assert_eq!(o.calls.load(Ordering::SeqCst), expected_calls, "{a:?} and {b:?}");
            assert_eq!(trace.len(), expected_calls);
        }
    }
}

#[test]
fn or_truth_table_and_short_circuit() {
    for a in Tri::ALL {
        for b in Tri::ALL {
            let o = Counting::new(a, b);
            let (v, trace) = eval(&Expr::or(Expr::check("A?"), Expr::check("B?")), &o);
            assert_eq!(v, oracle_or(a, b), "{a:?} or {b:?}");
            let expected_calls = if a == Tri::True { 1 } else { 2 };
            assert_eq!(o.calls.load(Ordering::SeqCst), expected_calls, "{a:?} or {b:?}");
            assert_eq!(trace.len(), expected_calls);
        }
    }
}

#[test]
fn short_circuit_skips_random_draws() {
    let o = Counting::new(Tri::False, Tri::True);
    let (_, trace) = eval(&Expr::and(Expr::check("A?"), Expr::chance(0.5)), &o);
    assert!(!trace.iter().any(|e| matches!(e, TraceEvent::ChanceDrawn { .. })));
}

#[test]
fn unknown_guard_takes_else_and_marks_uncertain() {
    let src = "when scene:\n  if check(\"A?\"):\n    trigger \"then\"\n  else:\n    trigger \"else\"\n";
    let o = Counting::new(Tri::Unknown, Tri::Unknown);
    let exec = execute_profile(
        &[parse(src, "seg1").unwrap()],
        &Scene::live("s", "X", "c"),
        &o,
        &RunSeed::new(0, "s", 0),
    )
    .unwrap();
    assert_eq!(exec.statements.len(), 1);
    assert_eq!(exec.statements[0].text, "else");
    assert!(exec.statements[0].uncertain);
}

const RANDOM: &str = "when scene:
  let mood = choice([\"calm\", \"wry\", \"sharp\"])
  if check(\"Is X teased?\") and chance(0.5):
    trigger mood
  elif chance(0.3):
    trigger \"X shrugs\"
  if chance(0.1):
    trigger \"X jokes\"
";

fn fixture() -> (Vec<cprof_core::dsl::Program>, TableConditionOracle, Scene) {
    let programs = vec![parse(RANDOM, "seg1").unwrap(), parse(RANDOM, "seg2").unwrap()];
    let oracle = TableConditionOracle::from_pairs([("s1", "Is X teased?", Tri::True)]);
    (programs, oracle, Scene::live("s1", "X", "They tease X."))
}

fn snapshot(exec: &cprof_core::engine::Execution) -> String {
    serde_json::to_string(exec).unwrap()
}

#[test]
fn fixed_inputs_are_byte_identical_over_1000_runs() {
    let (programs, oracle, scene) = fixture();
    let seed = RunSeed::new(42, "s1", 3);
    let first = snapshot(&execute_profile(&programs, &scene, &oracle, &seed).unwrap());
    for _ in 0..1000 {
        assert_eq!(
            snapshot(&execute_profile(&programs, &scene, &oracle, &seed).unwrap()),
            first
        );
    }
}

fn draws(exec: &cprof_core::engine::Execution) -> Vec<u64> {
    exec.trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::ChanceDrawn { draw, .. } => Some(draw.to_bits()),
            _ => None,
        })
        .collect()
}

#[test]
fn run_index_changes_chance_draws() {
    let (programs, oracle, scene) = fixture();
    let base = draws(&execute_profile(&programs, &scene, &oracle, &RunSeed::new(42, "s1", 0)).unwrap());
    assert!(!base.is_empty());
    for run in 1..200 {
        let other = draws(&execute_profile(&programs, &scene, &oracle, &RunSeed::new(42, "s1", run)).unwrap());
        assert_ne!(base, other, "run {run}");
    }
}

#[test]
fn choice_and_chance_are_calibrated() {
    let choice = parse("when scene:\n  trigger choice([\"a\", \"b\", \"c\"])\n", "seg1").unwrap();
    let chance = parse("when scene:\n  if chance(0.1):\n    trigger \"joke\"\n", "seg2").unwrap();
    let oracle = TableConditionOracle::default();
    let scene = Scene::live("cal", "X", "c");
    let n = 100_000u64;
    let start = Instant::now();
    let mut counts = [0u64; 3];
    let mut passes = 0u64;
    for run in 0..n {
        let exec = execute_profile(
            &[choice.clone(), chance.clone()],
            &scene,
            &oracle,
            &RunSeed::new(1, "cal", run),
        )
        .unwrap();
        for s in &exec.statements {
            match s.text.as_str() {
                "a" => counts[0] += 1,
                "b" => counts[1] += 1,
                "c" => counts[2] += 1,
                "joke" => passes += 1,
                other => panic!("{other}"),
            }
        }
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 1.0 / 3.0).abs() <= 0.01, "choice frequency {f}");
    }
    let rate = passes as f64 / n as f64;
    assert!((rate - 0.1).abs() <= 0.005, "chance rate {rate}");
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
}
