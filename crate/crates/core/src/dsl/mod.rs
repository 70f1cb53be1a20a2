//! The profile-logic language: a closed, indentation-sensitive DSL in which
//! each codified profile segment is written.
//!
//! ```text
//! when scene:
//!   if check("Is X being insulted?"):
//!     trigger "X become outrageous"
//!   let mood = choice(["X is positive.", "X is negative."])
//!   if chance(0.1):
//!     trigger mood
//! ```
//!
//! Programs are parsed with [`parse`], printed canonically with [`format`],
//! measured with [`metrics`] and linted with [`validate`].

mod ast;
mod diagnostic;
mod format;
mod lexer;
mod metrics;
mod parser;
mod validate;

pub use ast::{ElifArm, Expr, IfStmt, Position, Program, Span, Stmt, StrExpr};
pub use diagnostic::{render_diagnostics, Diagnostic, DiagnosticKind, Severity};
pub use format::{expr as format_expr, format, format_body, quote};
pub use lexer::is_keyword;
pub use metrics::{metrics, CodeMetrics};
pub use parser::parse;
pub use validate::validate;

/// Grammar summary embedded in codify and revise prompts.
pub const GRAMMAR: &str = r#"program    := "when scene:" NEWLINE INDENT stmt+ DEDENT
stmt       := if_stmt | "trigger" str_expr | "let" IDENT "=" str_expr
if_stmt    := "if" expr ":" block ("elif" expr ":" block)* ("else:" block)?
block      := NEWLINE INDENT stmt+ DEDENT
expr       := or ;  or := and ("or" and)* ;  and := not ("and" not)*
not        := "not" not | atom
atom       := "check(" STRING ")" | "chance(" NUMBER ")" | "true" | "false" | "(" expr ")"
str_expr   := STRING | IDENT | "choice([" STRING ("," STRING)+ "])"
Indentation is two spaces per level. Comments start with `#`. Strings are
double-quoted; escape `"` and `\` with a backslash. A check question is a
yes/no question about the scene ending in `?`. chance(p) is true with
probability p in [0, 1]. choice picks one option uniformly at random."#;

impl Program {
    /// Builds a program from a statement tree. The source text is the
    /// canonical rendering, re-parsed so every node carries a real span.
    pub fn from_body(segment_id: &str, body: Vec<Stmt>) -> Result<Program, Vec<Diagnostic>> {
        parse(&format_body(&body), segment_id)
    }

    pub fn canonical_source(&self) -> String {
        format(self)
    }
}
