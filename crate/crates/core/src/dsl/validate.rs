//! Lint pass over parsed programs. Produces warnings only.

use std::collections::HashSet;

use super::ast::{Expr, Program, Span, Stmt, StrExpr};
use super::diagnostic::{Diagnostic, DiagnosticKind};

pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut lint = Lint {
        seen_questions: HashSet::new(),
        out: Vec::new(),
    };
    lint.block(&program.body);
    lint.out
}

struct Lint<'a> {
    seen_questions: HashSet<&'a str>,
    out: Vec<Diagnostic>,
}

impl<'a> Lint<'a> {
    fn warn(&mut self, kind: DiagnosticKind, span: Span, message: String) {
        self.out.push(Diagnostic::new(kind, span.position(), message));
    }

    fn block(&mut self, stmts: &'a [Stmt]) {
        for stmt in stmts {
            match stmt {
                Stmt::Trigger { value, .. } | Stmt::Let { value, .. } => self.str_expr(value),
                Stmt::If(ifs) => {
                    self.expr(&ifs.guard);
                    self.block(&ifs.then);
                    for arm in &ifs.elifs {
                        self.expr(&arm.guard);
                        self.block(&arm.body);
                    }
                    if let Some(else_) = &ifs.else_ {
                        self.block(else_);
                    }
                    if ifs.guard == Expr::Const(true) && ifs.has_alternative() {
                        let span = ifs.elifs.first().map(|arm| arm.span).unwrap_or(ifs.else_span);
                        self.warn(
                            DiagnosticKind::UnreachableElse,
                            span,
                            "unreachable else: the `if` guard is always true".to_string(),
                        );
                    }
                }
            }
        }
    }

    fn expr(&mut self, e: &'a Expr) {
        match e {
            Expr::Check { question, span } => {
                if !self.seen_questions.insert(question.as_str()) {
                    self.warn(
                        DiagnosticKind::DuplicateQuestion,
                        *span,
                        format!("duplicate question {question:?} in one program"),
                    );
                }
            }
            Expr::Chance { p, span } => {
                if *p == 0.0 || *p == 1.0 {
                    self.warn(
                        DiagnosticKind::DegenerateProbability,
                        *span,
                        format!("degenerate probability: chance({p}) is constant"),
                    );
                }
            }
            Expr::Const(_) => {}
            Expr::Not(inner) => self.expr(inner),
            Expr::And(l, r) | Expr::Or(l, r) => {
                self.expr(l);
                self.expr(r);
            }
        }
    }

    fn str_expr(&mut self, value: &StrExpr) {
        if let StrExpr::Choice { options, span } = value {
            let unique: HashSet<&String> = options.iter().collect();
            if unique.len() != options.len() {
                self.warn(
                    DiagnosticKind::DuplicateChoiceOption,
                    *span,
                    "choice lists the same option more than once".to_string(),
                );
            }
        }
    }
}
