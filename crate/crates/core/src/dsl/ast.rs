//! Syntax tree for profile-logic programs.

use std::fmt;

/// Source location of an AST node.
///
/// Spans never participate in equality: two trees that differ only in
/// layout compare equal. Use [`Position`] where location identity matters.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }

    pub fn position(self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }
}

/// 1-based line and column inside a program's source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// One codified profile segment: `when scene:` followed by a statement block.
#[derive(Clone, Debug)]
pub struct Program {
    pub segment_id: String,
    pub body: Vec<Stmt>,
    pub source_text: String,
}

impl Program {
    /// Structural equality: same segment id and same statement tree.
    /// Source text and node spans are ignored.
    pub fn same_structure(&self, other: &Program) -> bool {
        self.segment_id == other.segment_id && self.body == other.body
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    If(IfStmt),
    Trigger { value: StrExpr, span: Span },
    Let { name: String, value: StrExpr, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::If(s) => s.span,
            Stmt::Trigger { span, .. } | Stmt::Let { span, .. } => *span,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IfStmt {
    pub guard: Expr,
    pub then: Vec<Stmt>,
    pub elifs: Vec<ElifArm>,
    pub else_: Option<Vec<Stmt>>,
    pub span: Span,
    /// Location of the `else` keyword, when present.
    pub else_span: Span,
}

impl IfStmt {
    pub fn has_alternative(&self) -> bool {
        !self.elifs.is_empty() || self.else_.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElifArm {
    pub guard: Expr,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Check { question: String, span: Span },
    Chance { p: f64, span: Span },
    Const(bool),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn check(question: impl Into<String>) -> Self {
        Expr::Check {
            question: question.into(),
            span: Span::default(),
        }
    }

    pub fn chance(p: f64) -> Self {
        Expr::Chance {
            p,
            span: Span::default(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Expr) -> Self {
        Expr::Not(Box::new(inner))
    }

    pub fn and(left: Expr, right: Expr) -> Self {
        Expr::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Expr, right: Expr) -> Self {
        Expr::Or(Box::new(left), Box::new(right))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StrExpr {
    Literal(String),
    Var(String),
    Choice { options: Vec<String>, span: Span },
}

impl StrExpr {
    pub fn literal(text: impl Into<String>) -> Self {
        StrExpr::Literal(text.into())
    }

    pub fn choice<I, S>(options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StrExpr::Choice {
            options: options.into_iter().map(Into::into).collect(),
            span: Span::default(),
        }
    }
}

/// Builders used by tests and by the codifier fallback.
impl Stmt {
    pub fn trigger(value: StrExpr) -> Self {
        Stmt::Trigger {
            value,
            span: Span::default(),
        }
    }

    pub fn let_(name: impl Into<String>, value: StrExpr) -> Self {
        Stmt::Let {
            name: name.into(),
            value,
            span: Span::default(),
        }
    }

    pub fn if_(guard: Expr, then: Vec<Stmt>) -> Self {
        Stmt::If(IfStmt {
            guard,
            then,
            elifs: Vec::new(),
            else_: None,
            span: Span::default(),
            else_span: Span::default(),
        })
    }

    pub fn if_else(guard: Expr, then: Vec<Stmt>, elifs: Vec<(Expr, Vec<Stmt>)>, else_: Option<Vec<Stmt>>) -> Self {
        Stmt::If(IfStmt {
            guard,
            then,
            elifs: elifs
                .into_iter()
                .map(|(guard, body)| ElifArm {
                    guard,
                    body,
                    span: Span::default(),
                })
                .collect(),
            else_,
            span: Span::default(),
            else_span: Span::default(),
        })
    }
}
