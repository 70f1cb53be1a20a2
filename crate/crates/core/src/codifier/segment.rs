//! Splitting profile text into sections, paragraphs or sentences.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Section,
    Paragraph,
    Sentence,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Section => "section",
            Granularity::Paragraph => "paragraph",
            Granularity::Sentence => "sentence",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "section" => Ok(Granularity::Section),
            "paragraph" => Ok(Granularity::Paragraph),
            "sentence" => Ok(Granularity::Sentence),
            other => Err(format!(
                "unknown granularity {other:?} (expected section, paragraph or sentence)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub text: String,
    pub granularity: Granularity,
    /// 0-based position in document order.
    pub index: usize,
    /// Byte range of `text` within the source.
    pub start: usize,
    pub end: usize,
}

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../../data/abbreviations.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Splits `text` at the given granularity. Segments never overlap and appear
/// in source order; each is trimmed of surrounding whitespace.
pub fn segment_profile(text: &str, granularity: Granularity) -> Vec<Segment> {
    let ranges = match granularity {
        Granularity::Paragraph => paragraphs(text),
        Granularity::Section => sections(text),
        Granularity::Sentence => paragraphs(text)
            .into_iter()
            .flat_map(|(s, e)| sentences(text, s, e))
            .collect(),
    };
    ranges
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Segment {
            id: format!("seg{}", index + 1),
            text: text[start..end].to_string(),
            granularity,
            index,
            start,
            end,
        })
        .collect()
}

/// Lines with their starting byte offsets, line terminators excluded.
fn lines(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut at = 0;
    for raw in text.split_inclusive('\n') {
        out.push((at, raw.trim_end_matches(['\n', '\r'])));
        at += raw.len();
    }
    out
}

fn trimmed(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    (lead + trail < slice.len()).then(|| (start + lead, end - trail))
}

fn paragraphs(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (at, line) in lines(text) {
        if line.trim().is_empty() {
            if let Some((s, e)) = open.take() {
                out.extend(trimmed(text, s, e));
            }
        } else {
            let end = at + line.len();
            open = Some(match open {
                Some((s, _)) => (s, end),
                None => (at, end),
            });
        }
    }
    if let Some((s, e)) = open {
        out.extend(trimmed(text, s, e));
    }
    out
}

/// `# Title`, `== Title ==`, or a short line whose letters are all upper case.
pub fn is_heading(line: &str) -> bool {
    let t = line.trim();
    if t.is_empty() {
        return false;
    }
    if t.starts_with('#') || t.starts_with("==") {
        return true;
    }
    let letters: Vec<char> = t.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2
        && letters.iter().all(|c| c.is_uppercase())
        && t.chars().count() <= 60
        && !t.ends_with(['.', '!', '?', ',', ';'])
}

fn sections(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (at, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let end = at + line.len();
        if is_heading(line) {
            if let Some((s, e)) = open.take() {
                out.extend(trimmed(text, s, e));
            }
            open = Some((at, end));
        } else {
            open = Some(match open {
                Some((s, _)) => (s, end),
                None => (at, end),
            });
        }
    }
    if let Some((s, e)) = open {
        out.extend(trimmed(text, s, e));
    }
    out
}

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

fn protected_period(para: &str, dot: usize) -> bool {
    let word_start = para[..dot]
        .rfind(char::is_whitespace)
        .map(|i| i + para[i..].chars().next().unwrap().len_utf8())
        .unwrap_or(0);
    let word = para[word_start..=dot].trim_start_matches(OPENERS);
    let lower = word.to_lowercase();
    if abbreviations().contains(lower.as_str()) {
        return true;
    }
    let stem = &word[..word.len() - 1];
    let mut chars = stem.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

fn sentences(text: &str, start: usize, end: usize) -> Vec<(usize, usize)> {
    let para = &text[start..end];
    let chars: Vec<(usize, char)> = para.char_indices().collect();
    let mut out = Vec::new();
    let mut sentence_start = 0;
    let mut in_straight = false;
    let mut curly = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        let quoted = in_straight || curly > 0;
        match c {
            '"' => in_straight = !in_straight,
            '\u{201c}' => curly += 1,
            '\u{201d}' => curly = curly.saturating_sub(1),
            _ => {}
        }
        // a quote that closes right after terminal punctuation can end the
        // sentence it belongs to
        let closes_after_terminal =
            quoted && !in_straight && curly == 0 && i > 0 && matches!(chars[i - 1].1, '.' | '!' | '?');
        let terminal = matches!(c, '.' | '!' | '?') && !quoted;
        if !terminal && !closes_after_terminal {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if terminal {
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) && chars[j].1 != '"' {
            j += 1;
        }
        let term_end = chars.get(j).map(|x| x.0).unwrap_or(para.len());
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let mut m = k;
        while m < chars.len() && OPENERS.contains(&chars[m].1) {
            m += 1;
        }
        let boundary = k > j
            && m < chars.len()
            && chars[m].1.is_uppercase()
            && !(terminal && c == '.' && j == i + 1 && protected_period(para, at));
        if boundary {
            out.extend(trimmed(text, start + sentence_start, start + term_end));
            sentence_start = chars[k].0;
            i = k;
        } else {
            i = j.max(i + 1);
        }
    }
    out.extend(trimmed(text, start + sentence_start, end));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str, g: Granularity) -> Vec<String> {
        segment_profile(text, g).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn paragraphs_split_on_blank_runs() {
        assert_eq!(texts("A.\n\nB.", Granularity::Paragraph), ["A.", "B."]);
        assert_eq!(
            texts("  A\nstill A\n \n\n\tB\n", Granularity::Paragraph),
            ["A\nstill A", "B"]
        );
        assert!(texts(" \n\t\n", Granularity::Paragraph).is_empty());
    }

    #[test]
    fn sections_group_paragraphs_under_headings() {
        let text = "Intro line.\n\n# Personality\nKind.\n\nLoyal.\n\n== Abilities ==\nFast.\n\nCOMBAT STYLE\nPunches.";
        let got = texts(text, Granularity::Section);
        assert_eq!(
            got,
            [
                "Intro line.",
                "# Personality\nKind.\n\nLoyal.",
                "== Abilities ==\nFast.",
                "COMBAT STYLE\nPunches."
            ]
        );
        assert_eq!(texts("# Only\nOne paragraph here.", Granularity::Section).len(), 1);
    }

    #[test]
    fn sentences_respect_abbreviations_and_quotes() {
        assert_eq!(
            texts("Dr. Who ran. He hid.", Granularity::Sentence),
            ["Dr. Who ran.", "He hid."]
        );
        assert_eq!(
            texts("She said \"Stop. Now.\" Then she left.", Granularity::Sentence),
            ["She said \"Stop. Now.\"", "Then she left."]
        );
        assert_eq!(
            texts("She said \"Stop, now\" and left.", Granularity::Sentence),
            ["She said \"Stop, now\" and left."]
        );
        assert_eq!(
            texts("J. R. Smith wrote it. Was it good? Yes!", Granularity::Sentence),
            ["J. R. Smith wrote it.", "Was it good?", "Yes!"]
        );
    }

    #[test]
    fn ids_indices_and_offsets() {
        let text = "First.\n\nSecond one.";
        let segs = segment_profile(text, Granularity::Paragraph);
        assert_eq!(segs[1].id, "seg2");
        assert_eq!(segs[1].index, 1);
        assert_eq!(&text[segs[1].start..segs[1].end], "Second one.");
    }

    #[test]
    fn granularity_parses_case_insensitively() {
        assert_eq!("PARAGRAPH".parse::<Granularity>().unwrap(), Granularity::Paragraph);
        assert!("word".parse::<Granularity>().is_err());
    }
}
