//! Indentation-aware tokenizer.
//!
//! Blank and comment-only lines never produce tokens. Every logical line ends
//! with a `Newline` token; changes in leading whitespace produce `Indent` /
//! `Dedent` pairs in the usual off-side-rule fashion.

use super::ast::Position;
use super::diagnostic::{Diagnostic, DiagnosticKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    When,
    Scene,
    If,
    Elif,
    Else,
    Trigger,
    Let,
    Not,
    And,
    Or,
    Check,
    Chance,
    Choice,
    True,
    False,
    Ident(String),
    Str(String),
    Number(f64),
    Colon,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Assign,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Number(_) => "number".to_string(),
            Tok::Newline => "end of line".to_string(),
            Tok::Indent => "indent".to_string(),
            Tok::Dedent => "dedent".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.spelling()),
        }
    }

    fn spelling(&self) -> &'static str {
        match self {
            Tok::When => "when",
            Tok::Scene => "scene",
            Tok::If => "if",
            Tok::Elif => "elif",
            Tok::Else => "else",
            Tok::Trigger => "trigger",
            Tok::Let => "let",
            Tok::Not => "not",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Check => "check",
            Tok::Chance => "chance",
            Tok::Choice => "choice",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Colon => ":",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Assign => "=",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Position,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "when" => Tok::When,
        "scene" => Tok::Scene,
        "if" => Tok::If,
        "elif" => Tok::Elif,
        "else" => Tok::Else,
        "trigger" => Tok::Trigger,
        "let" => Tok::Let,
        "not" => Tok::Not,
        "and" => Tok::And,
        "or" => Tok::Or,
        "check" => Tok::Check,
        "chance" => Tok::Chance,
        "choice" => Tok::Choice,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

pub fn is_keyword(word: &str) -> bool {
    keyword(word).is_some()
}

fn pos(line: usize, column: usize) -> Position {
    Position {
        line: line as u32,
        column: column as u32,
    }
}

/// Position of the last character of the source, used for tokens synthesized
/// at end of input so that every reported position stays inside the text.
fn end_position(lines: &[Vec<char>]) -> Position {
    for (idx, line) in lines.iter().enumerate().rev() {
        if !line.is_empty() {
            return pos(idx + 1, line.len());
        }
    }
    pos(1, 1)
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let lines: Vec<Vec<char>> = source
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).chars().collect())
        .collect();
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];

    for (idx, chars) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let mut col = 0;
        while col < chars.len() && (chars[col] == ' ' || chars[col] == '\t') {
            if chars[col] == '\t' {
                return Err(Diagnostic::new(
                    DiagnosticKind::Indentation,
                    pos(line_no, col + 1),
                    "tab character in indentation; use spaces",
                ));
            }
            col += 1;
        }
        if col == chars.len() || chars[col] == '#' {
            continue;
        }

        let indent = col;
        let top = *indents.last().expect("indent stack never empty");
        if indent > top {
            indents.push(indent);
            tokens.push(Token {
                tok: Tok::Indent,
                pos: pos(line_no, col + 1),
            });
        } else if indent < top {
            while indent < *indents.last().expect("indent stack never empty") {
                indents.pop();
                tokens.push(Token {
                    tok: Tok::Dedent,
                    pos: pos(line_no, col + 1),
                });
            }
            if indent != *indents.last().expect("indent stack never empty") {
                return Err(Diagnostic::new(
                    DiagnosticKind::Indentation,
                    pos(line_no, col + 1),
                    "dedent does not match any enclosing indentation level",
                ));
            }
        }

        lex_line(chars, line_no, col, &mut tokens)?;
        tokens.push(Token {
            tok: Tok::Newline,
            pos: pos(line_no, chars.len() + 1),
        });
    }

    let end = end_position(&lines);
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token {
            tok: Tok::Dedent,
            pos: end,
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        pos: end,
    });
    Ok(tokens)
}

fn lex_line(chars: &[char], line_no: usize, mut col: usize, out: &mut Vec<Token>) -> Result<(), Diagnostic> {
    while col < chars.len() {
        let c = chars[col];
        let start = pos(line_no, col + 1);
        match c {
            ' ' | '\t' => col += 1,
            '#' => break,
            ':' | '(' | ')' | '[' | ']' | ',' | '=' => {
                let tok = match c {
                    ':' => Tok::Colon,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Assign,
                };
                out.push(Token { tok, pos: start });
                col += 1;
            }
            '"' => {
                let (text, next) = lex_string(chars, line_no, col)?;
                out.push(Token {
                    tok: Tok::Str(text),
                    pos: start,
                });
                col = next;
            }
            c if c.is_ascii_digit() => {
                let begin = col;
                while col < chars.len() && chars[col].is_ascii_digit() {
                    col += 1;
                }
                if col < chars.len() && chars[col] == '.' {
                    col += 1;
                    let frac_start = col;
                    while col < chars.len() && chars[col].is_ascii_digit() {
                        col += 1;
                    }
                    if col == frac_start {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Lexical,
                            start,
                            "malformed number: expected digits after `.`",
                        ));
                    }
                }
                if col < chars.len() && (chars[col].is_alphanumeric() || chars[col] == '_') {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Lexical,
                        pos(line_no, col + 1),
                        "malformed number: unexpected character after digits",
                    ));
                }
                let text: String = chars[begin..col].iter().collect();
                let value: f64 = text
                    .parse()
                    .map_err(|_| Diagnostic::new(DiagnosticKind::Lexical, start, "malformed number"))?;
                out.push(Token {
                    tok: Tok::Number(value),
                    pos: start,
                });
            }
            c if c.is_alphabetic() || c == '_' => {
                let begin = col;
                while col < chars.len() && (chars[col].is_alphanumeric() || chars[col] == '_') {
                    col += 1;
                }
                let word: String = chars[begin..col].iter().collect();
                let tok = keyword(&word).unwrap_or(Tok::Ident(word));
                out.push(Token { tok, pos: start });
            }
            other => {
                return Err(Diagnostic::new(
                    DiagnosticKind::Lexical,
                    start,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    Ok(())
}

fn lex_string(chars: &[char], line_no: usize, open: usize) -> Result<(String, usize), Diagnostic> {
    let mut text = String::new();
    let mut col = open + 1;
    while col < chars.len() {
        match chars[col] {
            '"' => return Ok((text, col + 1)),
            '\\' => {
                let escaped = match chars.get(col + 1) {
                    Some('"') => '"',
                    Some('\\') => '\\',
                    Some('n') => '\n',
                    Some('t') => '\t',
                    Some('r') => '\r',
                    Some(other) => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Lexical,
                            pos(line_no, col + 1),
                            format!("invalid escape sequence `\\{other}`"),
                        ))
                    }
                    None => break,
                };
                text.push(escaped);
                col += 2;
            }
            c => {
                text.push(c);
                col += 1;
            }
        }
    }
    Err(Diagnostic::new(
        DiagnosticKind::Lexical,
        pos(line_no, open + 1),
        "unterminated string literal",
    ))
}
