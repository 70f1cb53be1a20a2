//! Canonical pretty-printer: two-space indents, one statement per line,
//! minimal parentheses, normalized string escapes.

use std::fmt::Write;

use super::ast::{Expr, IfStmt, Program, Stmt, StrExpr};

const INDENT: &str = "  ";

pub fn format(program: &Program) -> String {
    format_body(&program.body)
}

pub fn format_body(body: &[Stmt]) -> String {
    let mut out = String::from("when scene:\n");
    write_block(&mut out, body, 1);
    out
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for stmt in stmts {
        write_stmt(out, stmt, depth);
    }
}

fn pad(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn write_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    match stmt {
        Stmt::Trigger { value, .. } => {
            pad(out, depth);
            let _ = writeln!(out, "trigger {}", str_expr(value));
        }
        Stmt::Let { name, value, .. } => {
            pad(out, depth);
            let _ = writeln!(out, "let {name} = {}", str_expr(value));
        }
        Stmt::If(ifs) => write_if(out, ifs, depth),
    }
}

fn write_if(out: &mut String, ifs: &IfStmt, depth: usize) {
    pad(out, depth);
    let _ = writeln!(out, "if {}:", expr(&ifs.guard));
    write_block(out, &ifs.then, depth + 1);
    for arm in &ifs.elifs {
        pad(out, depth);
        let _ = writeln!(out, "elif {}:", expr(&arm.guard));
        write_block(out, &arm.body, depth + 1);
    }
    if let Some(else_) = &ifs.else_ {
        pad(out, depth);
        out.push_str("else:\n");
        write_block(out, else_, depth + 1);
    }
}

pub fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn str_expr(value: &StrExpr) -> String {
    match value {
        StrExpr::Literal(text) => quote(text),
        StrExpr::Var(name) => name.clone(),
        StrExpr::Choice { options, .. } => {
            let opts: Vec<String> = options.iter().map(|o| quote(o)).collect();
            format!("choice([{}])", opts.join(", "))
        }
    }
}

// Binding strength: or < and < not < atom.
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Or(..) => PREC_OR,
        Expr::And(..) => PREC_AND,
        Expr::Not(_) => PREC_NOT,
        _ => PREC_ATOM,
    }
}

pub fn expr(e: &Expr) -> String {
    expr_at(e, PREC_OR)
}

fn expr_at(e: &Expr, min: u8) -> String {
    let text = match e {
        Expr::Check { question, .. } => format!("check({})", quote(question)),
        Expr::Chance { p, .. } => format!("chance({p})"),
        Expr::Const(true) => "true".to_string(),
        Expr::Const(false) => "false".to_string(),
        Expr::Not(inner) => format!("not {}", expr_at(inner, PREC_NOT)),
        // Both operators are left-associative, so a same-precedence right
        // operand needs parentheses.
        Expr::And(l, r) => format!("{} and {}", expr_at(l, PREC_AND), expr_at(r, PREC_NOT)),
        Expr::Or(l, r) => format!("{} or {}", expr_at(l, PREC_OR), expr_at(r, PREC_AND)),
    };
    if precedence(e) < min {
        format!("({text})")
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    #[test]
    fn canonical_minimal_form() {
        let p = Program {
            segment_id: "s".into(),
            body: vec![Stmt::trigger(StrExpr::literal("Hi"))],
            source_text: String::new(),
        };
        assert_eq!(format(&p), "when scene:\n  trigger \"Hi\"\n");
    }

    #[test]
    fn parentheses_only_where_needed() {
        let e = Expr::and(
            Expr::or(Expr::Const(true), Expr::Const(false)),
            Expr::not(Expr::and(Expr::check("A?"), Expr::chance(0.25))),
        );
        assert_eq!(expr(&e), "(true or false) and not (check(\"A?\") and chance(0.25))");
        let right_nested = Expr::or(Expr::Const(true), Expr::or(Expr::Const(false), Expr::Const(true)));
        assert_eq!(expr(&right_nested), "true or (false or true)");
        let left_nested = Expr::or(Expr::or(Expr::Const(true), Expr::Const(false)), Expr::Const(true));
        assert_eq!(expr(&left_nested), "true or false or true");
    }

    #[test]
    fn normalizes_layout_and_escapes() {
        let src = "when scene:   # c\n\n    if   check( \"Is \\\"X\\\" here?\" ) :\n        trigger   \"a\\\\b\"\n";
        let p = parse(src, "s").unwrap();
        assert_eq!(
            format(&p),
            "when scene:\n  if check(\"Is \\\"X\\\" here?\"):\n    trigger \"a\\\\b\"\n"
        );
    }

    #[test]
    fn chance_prints_shortest_roundtrip_number() {
        assert_eq!(expr(&Expr::chance(1.0)), "chance(1)");
        assert_eq!(expr(&Expr::chance(0.1)), "chance(0.1)");
        assert_eq!(expr(&Expr::chance(0.0)), "chance(0)");
    }
}
