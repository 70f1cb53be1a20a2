//! Tree-walking interpreter for profile-logic programs.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rng::{RandomStream, RunSeed};
use super::scene::Scene;
use super::trace::{Branch, TraceEvent};
use super::tri::Tri;
use crate::dsl::{Expr, IfStmt, Program, Stmt, StrExpr};
use crate::oracles::{ConditionOracle, ConditionVerdict, OracleError};

/// A statement emitted by a program for the current scene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggeredStatement {
    pub text: String,
    pub segment_id: String,
    /// Arm index taken at each enclosing `if`: 0 for the then-block, `i + 1`
    /// for the i-th elif, `elifs + 1` for else.
    pub path: Vec<usize>,
    /// Some guard decision on the path resolved UNKNOWN.
    pub uncertain: bool,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("segment {segment_id}: {source}")]
    Oracle {
        segment_id: String,
        #[source]
        source: OracleError,
    },
    #[error("duplicate segment id {0} in profile")]
    DuplicateSegment(String),
}

impl EngineError {
    pub fn is_oracle_unavailable(&self) -> bool {
        matches!(
            self,
            EngineError::Oracle {
                source: OracleError::Unavailable(_),
                ..
            }
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub statements: Vec<TriggeredStatement>,
    #[serde(with = "super::trace::trace_json")]
    pub trace: Vec<TraceEvent>,
}

impl Execution {
    /// Non-memoized condition checks answered by an LLM backend.
    pub fn llm_oracle_calls(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    TraceEvent::Checked {
                        source: crate::oracles::VerdictSource::Llm,
                        cached: false,
                        ..
                    }
                )
            })
            .count()
    }
}

/// Answers memoized per `(scene_id, question)` for the span of one profile
/// execution.
pub type VerdictMemo = HashMap<(String, String), ConditionVerdict>;

/// Evaluation state for one segment: scene, oracle, memo and the trace
/// being recorded.
pub struct Interpreter<'a> {
    scene: &'a Scene,
    oracle: &'a dyn ConditionOracle,
    memo: &'a mut VerdictMemo,
    segment_id: &'a str,
    trace: Vec<TraceEvent>,
    statements: Vec<TriggeredStatement>,
    env: Vec<(String, String)>,
}

impl<'a> Interpreter<'a> {
    pub fn new(
        scene: &'a Scene,
        oracle: &'a dyn ConditionOracle,
        memo: &'a mut VerdictMemo,
        segment_id: &'a str,
    ) -> Self {
        Self {
            scene,
            oracle,
            memo,
            segment_id,
            trace: Vec::new(),
            statements: Vec::new(),
            env: Vec::new(),
        }
    }

    pub fn into_execution(self) -> Execution {
        Execution {
            statements: self.statements,
            trace: self.trace,
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Kleene evaluation with left-to-right short-circuiting: the right
    /// operand is not evaluated (no oracle call, no draw) once the left one
    /// decides the result.
    pub fn eval_expr(&mut self, expr: &Expr, rng: &mut RandomStream) -> Result<Tri, OracleError> {
        match expr {
            Expr::Const(b) => Ok(Tri::from(*b)),
            Expr::Chance { p, .. } => {
                let draw = rng.next_unit();
                let passed = draw < *p;
                self.trace.push(TraceEvent::ChanceDrawn { p: *p, draw, passed });
                Ok(Tri::from(passed))
            }
            Expr::Check { question, .. } => self.check(question),
            Expr::Not(inner) => Ok(!self.eval_expr(inner, rng)?),
            Expr::And(l, r) => {
                let left = self.eval_expr(l, rng)?;
                if left == Tri::False {
                    return Ok(Tri::False);
                }
                Ok(left & self.eval_expr(r, rng)?)
            }
            Expr::Or(l, r) => {
                let left = self.eval_expr(l, rng)?;
                if left == Tri::True {
                    return Ok(Tri::True);
                }
                Ok(left | self.eval_expr(r, rng)?)
            }
        }
    }

    fn check(&mut self, question: &str) -> Result<Tri, OracleError> {
        let key = (self.scene.id.clone(), question.to_string());
        let (verdict, cached) = match self.memo.get(&key) {
            Some(v) => (v.clone(), true),
            None => {
                let v = self.oracle.check_condition(self.scene, question)?;
                self.memo.insert(key, v.clone());
                let cached = v.cached;
                (v, cached)
            }
        };
        self.trace.push(TraceEvent::Checked {
            question: question.to_string(),
            verdict: verdict.verdict,
            source: verdict.source,
            cached,
        });
        Ok(verdict.verdict)
    }

    pub fn exec_block(
        &mut self,
        stmts: &[Stmt],
        rng: &mut RandomStream,
        path: &mut Vec<usize>,
        uncertain: bool,
    ) -> Result<(), OracleError> {
        let scope = self.env.len();
        for stmt in stmts {
            match stmt {
                Stmt::Trigger { value, .. } => {
                    let text = self.eval_str(value, rng);
                    self.trace.push(TraceEvent::Triggered { text: text.clone() });
                    self.statements.push(TriggeredStatement {
                        text,
                        segment_id: self.segment_id.to_string(),
                        path: path.clone(),
                        uncertain,
                    });
                }
                Stmt::Let { name, value, .. } => {
                    let text = self.eval_str(value, rng);
                    self.env.push((name.clone(), text));
                }
                Stmt::If(ifs) => self.exec_if(ifs, rng, path, uncertain)?,
            }
        }
        self.env.truncate(scope);
        Ok(())
    }

    fn exec_if(
        &mut self,
        ifs: &IfStmt,
        rng: &mut RandomStream,
        path: &mut Vec<usize>,
        uncertain: bool,
    ) -> Result<(), OracleError> {
        let mut saw_unknown = false;
        let guard = self.eval_expr(&ifs.guard, rng)?;
        if guard == Tri::True {
            return self.take_arm(Branch::Then, 0, &ifs.then, rng, path, uncertain);
        }
        saw_unknown |= guard == Tri::Unknown;

        for (i, arm) in ifs.elifs.iter().enumerate() {
            let guard = self.eval_expr(&arm.guard, rng)?;
            if guard == Tri::True {
                return self.take_arm(Branch::Elif(i), i + 1, &arm.body, rng, path, uncertain || saw_unknown);
            }
            saw_unknown |= guard == Tri::Unknown;
        }

        match &ifs.else_ {
            Some(body) => self.take_arm(
                Branch::Else,
                ifs.elifs.len() + 1,
                body,
                rng,
                path,
                uncertain || saw_unknown,
            ),
            None => {
                self.trace.push(TraceEvent::BranchTaken {
                    branch: Branch::Skipped,
                });
                Ok(())
            }
        }
    }

    fn take_arm(
        &mut self,
        branch: Branch,
        arm_index: usize,
        body: &[Stmt],
        rng: &mut RandomStream,
        path: &mut Vec<usize>,
        uncertain: bool,
    ) -> Result<(), OracleError> {
        self.trace.push(TraceEvent::BranchTaken { branch });
        path.push(arm_index);
        let result = self.exec_block(body, rng, path, uncertain);
        path.pop();
        result
    }

    fn eval_str(&mut self, value: &StrExpr, rng: &mut RandomStream) -> String {
        match value {
            StrExpr::Literal(text) => text.clone(),
            StrExpr::Var(name) => self
                .env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .expect("parser rejects unbound identifiers"),
            StrExpr::Choice { options, .. } => {
                let chosen_index = rng.below(options.len());
                self.trace.push(TraceEvent::ChoiceMade {
                    options: options.clone(),
                    chosen_index,
                });
                options[chosen_index].clone()
            }
        }
    }
}

/// Evaluates one condition expression in isolation and returns its value with
/// the events it produced.
pub fn eval_expr(
    expr: &Expr,
    scene: &Scene,
    oracle: &dyn ConditionOracle,
    rng: &mut RandomStream,
) -> Result<(Tri, Vec<TraceEvent>), OracleError> {
    let mut memo = VerdictMemo::new();
    let mut interp = Interpreter::new(scene, oracle, &mut memo, "");
    let value = interp.eval_expr(expr, rng)?;
    Ok((value, interp.into_execution().trace))
}

pub fn execute_segment(
    program: &Program,
    scene: &Scene,
    oracle: &dyn ConditionOracle,
    seed: &RunSeed,
) -> Result<Execution, EngineError> {
    let mut memo = VerdictMemo::new();
    run_segment(program, scene, oracle, seed, &mut memo)
}

fn run_segment(
    program: &Program,
    scene: &Scene,
    oracle: &dyn ConditionOracle,
    seed: &RunSeed,
    memo: &mut VerdictMemo,
) -> Result<Execution, EngineError> {
    let mut rng = seed.stream_for(&program.segment_id);
    let mut interp = Interpreter::new(scene, oracle, memo, &program.segment_id);
    interp
        .exec_block(&program.body, &mut rng, &mut Vec::new(), false)
        .map_err(|source| EngineError::Oracle {
            segment_id: program.segment_id.clone(),
            source,
        })?;
    Ok(interp.into_execution())
}

/// Runs every segment in profile order and concatenates the results. Each
/// segment draws from its own substream keyed by its segment id; oracle
/// answers are shared across segments.
pub fn execute_profile(
    programs: &[Program],
    scene: &Scene,
    oracle: &dyn ConditionOracle,
    seed: &RunSeed,
) -> Result<Execution, EngineError> {
    let mut ids = HashSet::new();
    for p in programs {
        if !ids.insert(p.segment_id.as_str()) {
            return Err(EngineError::DuplicateSegment(p.segment_id.clone()));
        }
    }
    let mut memo = VerdictMemo::new();
    let mut out = Execution::default();
    for program in programs {
        let exec = run_segment(program, scene, oracle, seed, &mut memo)?;
        out.statements.extend(exec.statements);
        out.trace.extend(exec.trace);
    }
    Ok(out)
}
