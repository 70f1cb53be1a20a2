use serde::Serialize;

use super::ast::{Expr, Program, Stmt, StrExpr};

/// Structural measures of a program along the axes used to group
/// codification quality: nesting depth, branching, randomness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CodeMetrics {
    pub if_depth: usize,
    pub has_branch: bool,
    pub has_random: bool,
    pub check_count: usize,
}

pub fn metrics(program: &Program) -> CodeMetrics {
    let mut m = CodeMetrics::default();
    m.if_depth = block(&program.body, &mut m);
    m
}

/// Walks a block, updating flags and counts; returns the block's If depth.
fn block(stmts: &[Stmt], m: &mut CodeMetrics) -> usize {
    let mut depth = 0;
    for stmt in stmts {
        let d = match stmt {
            Stmt::Trigger { value, .. } | Stmt::Let { value, .. } => {
                str_expr(value, m);
                0
            }
            Stmt::If(ifs) => {
                m.has_branch |= ifs.has_alternative();
                expr(&ifs.guard, m);
                let mut inner = block(&ifs.then, m);
                for arm in &ifs.elifs {
                    expr(&arm.guard, m);
                    inner = inner.max(block(&arm.body, m));
                }
                if let Some(else_) = &ifs.else_ {
                    inner = inner.max(block(else_, m));
                }
                1 + inner
            }
        };
        depth = depth.max(d);
    }
    depth
}

fn expr(e: &Expr, m: &mut CodeMetrics) {
    match e {
        Expr::Check { .. } => m.check_count += 1,
        Expr::Chance { .. } => m.has_random = true,
        Expr::Const(_) => {}
        Expr::Not(inner) => expr(inner, m),
        Expr::And(l, r) | Expr::Or(l, r) => {
            expr(l, m);
            expr(r, m);
        }
    }
}

fn str_expr(value: &StrExpr, m: &mut CodeMetrics) {
    if matches!(value, StrExpr::Choice { .. }) {
        m.has_random = true;
    }
}
