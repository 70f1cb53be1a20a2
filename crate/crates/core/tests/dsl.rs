use std::path::PathBuf;
use std::time::{Duration, Instant};

use cprof_core::dsl::{format, metrics, parse, validate, Expr, Program, Severity, Stmt, StrExpr};
use proptest::prelude::*;

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cpl"))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// `# depth=N branch=yes|no random=yes|no` on the first line.
fn expected_axes(src: &str) -> (usize, bool, bool) {
    let header = src.lines().next().unwrap().trim_start_matches('#');
    let mut depth = None;
    let mut branch = None;
    let mut random = None;
    for kv in header.split_whitespace() {
        let (k, v) = kv.split_once('=').unwrap();
        match k {
            "depth" => depth = Some(v.parse().unwrap()),
            "branch" => branch = Some(v == "yes"),
            "random" => random = Some(v == "yes"),
            other => panic!("unknown header key {other}"),
        }
    }
    (depth.unwrap(), branch.unwrap(), random.unwrap())
}

#[test]
fn golden_corpus_round_trips() {
    let corpus = corpus();
    assert!(corpus.len() >= 30, "corpus has {} programs", corpus.len());
    let start = Instant::now();
    let mut depths = [false; 5];
    let mut cells = std::collections::HashSet::new();
    for (name, src) in &corpus {
        let first = parse(src, name).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        let printed = format(&first);
        let second = parse(&printed, name).unwrap_or_else(|d| panic!("{name} canonical:\n{printed}\n{d:?}"));
        assert!(first.same_structure(&second), "{name}: structure changed\n{printed}");
        assert_eq!(format(&second), printed, "{name}: format is not a fixed point");
        assert!(
            validate(&first).iter().all(|d| d.severity != Severity::Error),
            "{name}: validate reported errors"
        );

        let (depth, branch, random) = expected_axes(src);
        let m = metrics(&first);
        assert_eq!(
            (m.if_depth, m.has_branch, m.has_random),
            (depth, branch, random),
            "{name}"
        );
        depths[depth] = true;
        if (1..=4).contains(&depth) {
            cells.insert((depth, branch, random));
        }
    }
    assert!(depths[1..].iter().all(|d| *d));
    // every depth 1-4 with every branch/random combination
    assert_eq!(cells.len(), 16);
    assert!(start.elapsed() < Duration::from_secs(1), "took {:?}", start.elapsed());
}

#[test]
fn comments_and_parentheses_do_not_survive_formatting() {
    let corpus = corpus();
    let (_, src) = corpus.iter().find(|(n, _)| n == "d1_elif_chain").unwrap();
    let printed = format(&parse(src, "x").unwrap());
    assert!(!printed.contains('#'));
    assert!(printed.contains("elif check(\"Is Doran bored?\") or check(\"Is Doran alone?\"):"));
}

// ---- generator/parser duality ----

/// Statement text and choice options: non-empty, escapes included.
fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.'\"\\\\\n\t\u{e9}\u{2026}-]{1,16}"
}

fn question() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,'\"\\\\]{0,16}".prop_filter_map("blank question", |q| {
        let q = format!("{q}?");
        (!q.trim().is_empty() && q.trim() != "?").then_some(q)
    })
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        4 => question().prop_map(Expr::check),
        2 => (0.0f64..=1.0).prop_map(Expr::chance),
        1 => Just(Expr::chance(0.0)),
        1 => Just(Expr::chance(1.0)),
        1 => any::<bool>().prop_map(Expr::Const),
    ];
    leaf.prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Expr::or(l, r)),
        ]
    })
}

fn str_expr(vars: usize) -> BoxedStrategy<StrExpr> {
    let choice = prop::collection::vec(text(), 2..5)
        .prop_filter("choice needs two distinct options", |o| o.iter().any(|x| x != &o[0]))
        .prop_map(StrExpr::choice);
    if vars == 0 {
        prop_oneof![3 => text().prop_map(StrExpr::literal), 1 => choice].boxed()
    } else {
        prop_oneof![
            3 => text().prop_map(StrExpr::literal),
            1 => choice,
            1 => (0..vars).prop_map(|i| StrExpr::Var(format!("v{i}"))),
        ]
        .boxed()
    }
}

fn block(depth: u32, vars: usize) -> BoxedStrategy<Vec<Stmt>> {
    let trigger = str_expr(vars).prop_map(Stmt::trigger);
    let stmt = if depth == 0 {
        trigger.boxed()
    } else {
        let inner = || block(depth - 1, vars);
        let if_stmt = (
            expr(),
            inner(),
            prop::collection::vec((expr(), inner()), 0..3),
            prop::option::of(inner()),
        )
            .prop_map(|(g, then, elifs, else_)| Stmt::if_else(g, then, elifs, else_));
        prop_oneof![2 => trigger, 1 => if_stmt].boxed()
    };
    prop::collection::vec(stmt, 1..4).boxed()
}

/// Top-level lets followed by a body that may refer to them.
fn program() -> impl Strategy<Value = Vec<Stmt>> {
    (0usize..3)
        .prop_flat_map(|n| (prop::collection::vec(str_expr(0), n), block(4, n)))
        .prop_map(|(lets, body)| {
            let mut out: Vec<Stmt> = lets
                .into_iter()
                .enumerate()
                .map(|(i, v)| Stmt::let_(format!("v{i}"), v))
                .collect();
            out.extend(body);
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_programs_survive_format_and_parse(body in program()) {
        let original = Program { segment_id: "gen".into(), body, source_text: String::new() };
        let printed = format(&original);
        let parsed = parse(&printed, "gen").map_err(|d| TestCaseError::fail(format!("{printed}\n{d:?}")))?;
        prop_assert!(original.same_structure(&parsed), "{}", printed);
        prop_assert_eq!(format(&parsed), printed);
    }

    #[test]
    fn chance_literals_are_exact(p in 0.0f64..=1.0) {
        let src = format!("when scene:\n  if chance({p}):\n    trigger \"x\"\n");
        let prog = parse(&src, "p").unwrap();
        let Stmt::If(ifs) = &prog.body[0] else { panic!() };
        prop_assert_eq!(&ifs.guard, &Expr::chance(p));
        let Expr::Chance { p: got, .. } = ifs.guard else { panic!() };
        prop_assert_eq!(got.to_bits(), p.to_bits());
    }
}
