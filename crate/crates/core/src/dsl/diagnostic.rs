use std::fmt;

use serde::Serialize;

use super::ast::Position;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Error,
    Warn,
}

/// Message class of a diagnostic. Errors come from `parse`, warnings from
/// `validate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Lexical,
    Indentation,
    Grammar,
    FreeVariable,
    EmptyBlock,
    DuplicateQuestion,
    DegenerateProbability,
    UnreachableElse,
    DuplicateChoiceOption,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::Lexical => "lexical-error",
            DiagnosticKind::Indentation => "indentation-error",
            DiagnosticKind::Grammar => "grammar-error",
            DiagnosticKind::FreeVariable => "free-variable",
            DiagnosticKind::EmptyBlock => "empty-block",
            DiagnosticKind::DuplicateQuestion => "duplicate-question",
            DiagnosticKind::DegenerateProbability => "degenerate-probability",
            DiagnosticKind::UnreachableElse => "unreachable-else",
            DiagnosticKind::DuplicateChoiceOption => "duplicate-choice-option",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            DiagnosticKind::Lexical
            | DiagnosticKind::Indentation
            | DiagnosticKind::Grammar
            | DiagnosticKind::FreeVariable
            | DiagnosticKind::EmptyBlock => Severity::Error,
            _ => Severity::Warn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub position: Position,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, position: Position, message: impl Into<String>) -> Self {
        Self {
            severity: kind.severity(),
            kind,
            position,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warn => "warning",
        };
        write!(
            f,
            "{}: {} [{}] {}",
            self.position,
            sev,
            self.kind.as_str(),
            self.message
        )
    }
}

/// Renders a diagnostic list one per line, the form fed back to the codify
/// and revise prompts.
pub fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}
