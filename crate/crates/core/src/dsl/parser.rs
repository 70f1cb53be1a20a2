//! Recursive-descent parser for profile-logic programs.
//!
//! Lexical, indentation, grammar and empty-block errors stop the parse at the
//! first occurrence. Unbound identifiers are collected and reported together
//! once the rest of the program parsed cleanly.

use std::collections::HashSet;

use super::ast::{ElifArm, Expr, IfStmt, Position, Program, Span, Stmt, StrExpr};
use super::diagnostic::{Diagnostic, DiagnosticKind};
use super::lexer::{tokenize, Tok, Token};

pub fn parse(source: &str, segment_id: &str) -> Result<Program, Vec<Diagnostic>> {
    let tokens = tokenize(source).map_err(|d| vec![d])?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        scopes: Vec::new(),
        unbound: Vec::new(),
    };
    let body = parser.program().map_err(|d| vec![d])?;
    if !parser.unbound.is_empty() {
        return Err(parser.unbound);
    }
    Ok(Program {
        segment_id: segment_id.to_string(),
        body,
        source_text: source.to_string(),
    })
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    scopes: Vec<HashSet<String>>,
    unbound: Vec<Diagnostic>,
}

fn span_of(pos: Position) -> Span {
    Span::new(pos.line, pos.column)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.cursor.min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> Token {
        let tok = self.peek().clone();
        if self.cursor < self.tokens.len() - 1 {
            self.cursor += 1;
        }
        tok
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let found = self.peek();
        let kind = match found.tok {
            Tok::Indent => DiagnosticKind::Indentation,
            _ => DiagnosticKind::Grammar,
        };
        let message = match found.tok {
            Tok::Indent => format!("unexpected indent; expected {expected}"),
            _ => format!("expected {expected}, found {}", found.tok.describe()),
        };
        Diagnostic::new(kind, found.pos, message)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<Token> {
        if self.at(&tok) {
            Ok(self.advance())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn program(&mut self) -> PResult<Vec<Stmt>> {
        let header = self.expect(Tok::When, "`when scene:` header")?;
        self.expect(Tok::Scene, "`scene` after `when`")?;
        self.expect(Tok::Colon, "`:` after `when scene`")?;
        let body = self.block(header.pos)?;
        if !self.at(&Tok::Eof) {
            return Err(self.unexpected("end of input after the program body"));
        }
        Ok(body)
    }

    /// `NEWLINE INDENT stmt+ DEDENT`. `owner` is the position of the keyword
    /// that opened the block and is where an empty block is reported.
    fn block(&mut self, owner: Position) -> PResult<Vec<Stmt>> {
        self.expect(Tok::Newline, "end of line after `:`")?;
        if !self.at(&Tok::Indent) {
            return Err(Diagnostic::new(
                DiagnosticKind::EmptyBlock,
                owner,
                "empty block: expected an indented statement",
            ));
        }
        self.advance();
        self.scopes.push(HashSet::new());
        let mut stmts = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            stmts.push(self.stmt()?);
        }
        self.scopes.pop();
        self.expect(Tok::Dedent, "end of block")?;
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().pos;
        match self.peek().tok {
            Tok::If => self.if_stmt(),
            Tok::Trigger => {
                self.advance();
                let value = self.str_expr()?;
                self.expect(Tok::Newline, "end of line after trigger")?;
                Ok(Stmt::Trigger {
                    value,
                    span: span_of(start),
                })
            }
            Tok::Let => {
                self.advance();
                let name_tok = self.advance();
                let name = match name_tok.tok {
                    Tok::Ident(name) => name,
                    other => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Grammar,
                            name_tok.pos,
                            format!("expected identifier after `let`, found {}", other.describe()),
                        ))
                    }
                };
                self.expect(Tok::Assign, "`=` in let binding")?;
                let value = self.str_expr()?;
                self.expect(Tok::Newline, "end of line after let binding")?;
                self.scopes
                    .last_mut()
                    .expect("statements only occur inside blocks")
                    .insert(name.clone());
                Ok(Stmt::Let {
                    name,
                    value,
                    span: span_of(start),
                })
            }
            Tok::Elif | Tok::Else => Err(Diagnostic::new(
                DiagnosticKind::Grammar,
                start,
                format!("{} without a matching `if`", self.peek().tok.describe()),
            )),
            _ => Err(self.unexpected("statement (`if`, `trigger` or `let`)")),
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let if_tok = self.advance();
        let guard = self.expr()?;
        self.expect(Tok::Colon, "`:` after if condition")?;
        let then = self.block(if_tok.pos)?;

        let mut elifs = Vec::new();
        while self.at(&Tok::Elif) {
            let elif_tok = self.advance();
            let guard = self.expr()?;
            self.expect(Tok::Colon, "`:` after elif condition")?;
            let body = self.block(elif_tok.pos)?;
            elifs.push(ElifArm {
                guard,
                body,
                span: span_of(elif_tok.pos),
            });
        }

        let mut else_ = None;
        let mut else_span = Span::default();
        if self.at(&Tok::Else) {
            let else_tok = self.advance();
            self.expect(Tok::Colon, "`:` after else")?;
            else_ = Some(self.block(else_tok.pos)?);
            else_span = span_of(else_tok.pos);
        }

        Ok(Stmt::If(IfStmt {
            guard,
            then,
            elifs,
            else_,
            span: span_of(if_tok.pos),
            else_span,
        }))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.at(&Tok::Or) {
            self.advance();
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.at(&Tok::And) {
            self.advance();
            let right = self.not_expr()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.at(&Tok::Not) {
            self.advance();
            let inner = self.not_expr()?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.peek().pos;
        match self.peek().tok {
            Tok::Check => {
                self.advance();
                self.expect(Tok::LParen, "`(` after check")?;
                let q_tok = self.advance();
                let question = match q_tok.tok {
                    Tok::Str(s) => s,
                    other => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Grammar,
                            q_tok.pos,
                            format!("check expects a question string, found {}", other.describe()),
                        ))
                    }
                };
                if question.trim().is_empty() || !question.ends_with('?') {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Grammar,
                        q_tok.pos,
                        "check question must be a non-empty string ending in `?`",
                    ));
                }
                self.expect(Tok::RParen, "`)` after check question")?;
                Ok(Expr::Check {
                    question,
                    span: span_of(start),
                })
            }
            Tok::Chance => {
                self.advance();
                self.expect(Tok::LParen, "`(` after chance")?;
                let n_tok = self.advance();
                let p = match n_tok.tok {
                    Tok::Number(p) => p,
                    other => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Grammar,
                            n_tok.pos,
                            format!("chance expects a probability, found {}", other.describe()),
                        ))
                    }
                };
                if !(0.0..=1.0).contains(&p) {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Grammar,
                        n_tok.pos,
                        format!("probability {p} is outside [0, 1]"),
                    ));
                }
                self.expect(Tok::RParen, "`)` after chance probability")?;
                Ok(Expr::Chance {
                    p,
                    span: span_of(start),
                })
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Const(true))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Const(false))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)` closing parenthesized condition")?;
                Ok(inner)
            }
            _ => Err(self.unexpected("condition (`check`, `chance`, `true`, `false`, `not` or `(`)")),
        }
    }

    fn str_expr(&mut self) -> PResult<StrExpr> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Str(text) => {
                self.advance();
                if text.is_empty() {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Grammar,
                        tok.pos,
                        "statement text must not be empty",
                    ));
                }
                Ok(StrExpr::Literal(text))
            }
            Tok::Ident(name) => {
                self.advance();
                if !self.scopes.iter().any(|s| s.contains(&name)) {
                    self.unbound.push(Diagnostic::new(
                        DiagnosticKind::FreeVariable,
                        tok.pos,
                        format!("unbound identifier {name}"),
                    ));
                }
                Ok(StrExpr::Var(name))
            }
            Tok::Choice => {
                self.advance();
                self.expect(Tok::LParen, "`(` after choice")?;
                self.expect(Tok::LBracket, "`[` opening choice options")?;
                let mut options = Vec::new();
                loop {
                    let opt = self.advance();
                    match opt.tok {
                        Tok::Str(s) if !s.is_empty() => options.push(s),
                        Tok::Str(_) => {
                            return Err(Diagnostic::new(
                                DiagnosticKind::Grammar,
                                opt.pos,
                                "choice options must not be empty",
                            ))
                        }
                        other => {
                            return Err(Diagnostic::new(
                                DiagnosticKind::Grammar,
                                opt.pos,
                                format!("expected string option in choice, found {}", other.describe()),
                            ))
                        }
                    }
                    if self.at(&Tok::Comma) {
                        self.advance();
                        continue;
                    }
                    break;
                }
                self.expect(Tok::RBracket, "`]` closing choice options")?;
                self.expect(Tok::RParen, "`)` after choice options")?;
                let distinct: HashSet<&String> = options.iter().collect();
                if distinct.len() < 2 {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Grammar,
                        tok.pos,
                        "choice needs at least two distinct options",
                    ));
                }
                Ok(StrExpr::Choice {
                    options,
                    span: span_of(tok.pos),
                })
            }
            _ => Err(self.unexpected("string, identifier, or choice([...])")),
        }
    }
}
