//! Prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Shipped template texts live in
//! `templates/*.txt` and can be replaced by a directory of same-named files.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: unbound placeholder {{{placeholder}}}")]
    Unbound { template: String, placeholder: String },
    #[error("template {template}: unterminated placeholder at byte {at}")]
    Unterminated { template: String, at: usize },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("template {name}: {message}")]
    Io { name: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

enum Piece<'a> {
    Text(&'a str),
    Hole(&'a str),
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, TemplateError> {
        let t = self.text.as_str();
        let bytes = t.as_bytes();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    out.push(Piece::Text(&t[start..i + 1]));
                    i += 2;
                    start = i;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    out.push(Piece::Text(&t[start..i + 1]));
                    i += 2;
                    start = i;
                }
                b'{' => {
                    let close = t[i + 1..].find('}').ok_or_else(|| TemplateError::Unterminated {
                        template: self.name.clone(),
                        at: i,
                    })?;
                    out.push(Piece::Text(&t[start..i]));
                    out.push(Piece::Hole(&t[i + 1..i + 1 + close]));
                    i += close + 2;
                    start = i;
                }
                _ => i += 1,
            }
        }
        out.push(Piece::Text(&t[start..]));
        Ok(out)
    }

    pub fn placeholders(&self) -> Result<BTreeSet<String>, TemplateError> {
        Ok(self
            .pieces()?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Hole(h) => Some(h.to_string()),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Fills every placeholder. Extra bindings are ignored; a missing one is
    /// an error.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Text(s) => out.push_str(s),
                Piece::Hole(h) => {
                    let value = bindings
                        .iter()
                        .rev()
                        .find(|(k, _)| *k == h)
                        .ok_or_else(|| TemplateError::Unbound {
                            template: self.name.clone(),
                            placeholder: h.to_string(),
                        })?;
                    out.push_str(value.1);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! shipped {
    ($($name:literal),* $(,)?) => {
        pub const TEMPLATE_NAMES: &[&str] = &[$($name),*];
        fn shipped_text(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../../templates/", $name, ".txt"))),)*
                _ => None,
            }
        }
    };
}

shipped!(
    "role_play",
    "cot",
    "codify",
    "blame",
    "revise",
    "nli",
    "preference",
    "condition",
    "scene_extract",
    "guiding_question",
    "spoiler_filter",
);

/// The full set of named templates, shipped defaults unless overridden.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: TEMPLATE_NAMES
                .iter()
                .map(|n| PromptTemplate::new(*n, shipped_text(n).unwrap()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Shipped templates with any `<name>.txt` found in `dir` taking
    /// precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for t in &mut set.templates {
            let path = dir.join(format!("{}.txt", t.name));
            if path.exists() {
                t.text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    name: t.name.clone(),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))
    }

    pub fn set(&mut self, template: PromptTemplate) {
        match self.templates.iter_mut().find(|t| t.name == template.name) {
            Some(slot) => *slot = template,
            None => self.templates.push(template),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_escapes() {
        let t = PromptTemplate::new("t", "Hi {name}, use {{braces}} and {name} again.");
        assert_eq!(
            t.render(&[("name", "Ayla")]).unwrap(),
            "Hi Ayla, use {braces} and Ayla again."
        );
        assert_eq!(t.placeholders().unwrap().into_iter().collect::<Vec<_>>(), ["name"]);
    }

    #[test]
    fn unbound_placeholder_is_reported() {
        let t = PromptTemplate::new("t", "{a} {b}");
        assert_eq!(
            t.render(&[("a", "1")]),
            Err(TemplateError::Unbound {
                template: "t".into(),
                placeholder: "b".into()
            })
        );
    }

    #[test]
    fn shipped_templates_parse() {
        let set = TemplateSet::default();
        for name in TEMPLATE_NAMES {
            let t = set.get(name).unwrap();
            assert!(!t.placeholders().unwrap().is_empty(), "{name} has no placeholders");
        }
    }

    #[test]
    fn override_dir_replaces_text() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("nli.txt"), "custom {reference}").unwrap();
        let set = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.get("nli").unwrap().text, "custom {reference}");
        assert_ne!(set.get("cot").unwrap().text, "custom {reference}");
    }
}
