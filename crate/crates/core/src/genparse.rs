//! Recovering structured predictions from free-text generations.
//!
//! All parsers are total. Anything that deviates from the serialized output
//! format sets `malformed` and leaves a note; nothing is dropped.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::{LabelScheme, TaskKind};

/// Classification result when no single scheme label can be read off the
/// generation. Schemes may not contain this string.
pub const NO_MATCH: &str = "NO_MATCH";

const MAX_NOTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// One label per input token.
    Labels(Vec<String>),
    /// A scheme label or [`NO_MATCH`].
    Label(String),
    /// Matched labels in scheme order.
    LabelSet(Vec<String>),
    /// Free text (QA).
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub record_id: String,
    pub task_kind: TaskKind,
    pub prediction: Prediction,
    pub malformed: bool,
    pub notes: Vec<String>,
}

impl ParsedPrediction {
    fn new(task_kind: TaskKind, prediction: Prediction, notes: Notes) -> Self {
        Self {
            record_id: String::new(),
            task_kind,
            prediction,
            malformed: notes.malformed,
            notes: notes.finish(),
        }
    }

    pub fn with_record_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = id.into();
        self
    }

    pub fn labels(&self) -> Option<&[String]> {
        match &self.prediction {
            Prediction::Labels(l) | Prediction::LabelSet(l) => Some(l),
            _ => None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match &self.prediction {
            Prediction::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Collects diagnostics, keeping only the first few verbatim.
#[derive(Default)]
struct Notes {
    malformed: bool,
    kept: Vec<String>,
    dropped: usize,
}

impl Notes {
    fn flag(&mut self, note: impl FnOnce() -> String) {
        self.malformed = true;
        if self.kept.len() < MAX_NOTES {
            self.kept.push(note());
        } else {
            self.dropped += 1;
        }
    }

    fn finish(mut self) -> Vec<String> {
        if self.dropped > 0 {
            self.kept
                .push(format!("{} more notes omitted", self.dropped));
        }
        self.kept
    }
}

fn clip(s: &str) -> &str {
    match s.char_indices().nth(60) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Reads `token: LABEL` lines back onto `tokens`.
///
/// Lines are aligned by a forward scan for the exact token text. Positions
/// without an aligned, valid label fall back to `O`, so the result always has
/// one label per token.
pub fn parse_ner_generation<T: AsRef<str>>(
    generation: &str,
    tokens: &[T],
    scheme: &LabelScheme,
) -> ParsedPrediction {
    let mut labels = vec![String::from("O"); tokens.len()];
    let mut notes = Notes::default();
    let mut next = 0usize;
    let mut line_count = 0usize;
    for (n, line) in generation
        .split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
    {
        line_count += 1;
        let Some((token, label)) = line.rsplit_once(": ") else {
            notes.flag(|| {
                format!(
                    "line {}: no `token: LABEL` separator in `{}`",
                    n + 1,
                    clip(line)
                )
            });
            continue;
        };
        let (token, label) = (token.trim(), label.trim());
        let Some(pos) = tokens[next.min(tokens.len())..]
            .iter()
            .position(|t| t.as_ref() == token)
            .map(|p| p + next)
        else {
            notes.flag(|| format!("line {}: token `{}` does not align", n + 1, clip(token)));
            continue;
        };
        if scheme.contains(label) {
            labels[pos] = label.to_string();
        } else {
            notes.flag(|| format!("line {}: invalid label `{}`", n + 1, clip(label)));
        }
        next = pos + 1;
    }
    if line_count != tokens.len() {
        notes.flag(|| format!("{} lines for {} tokens", line_count, tokens.len()));
    }
    ParsedPrediction::new(TaskKind::Ner, Prediction::Labels(labels), notes)
}

fn is_trim_char(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»')
}

/// Trim, case-fold, strip surrounding punctuation.
pub fn normalize(s: &str) -> String {
    s.trim_matches(is_trim_char).to_lowercase()
}

fn whole_word_match(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    haystack.match_indices(needle).any(|(i, m)| {
        boundary(haystack[..i].chars().next_back())
            && boundary(haystack[i + m.len()..].chars().next())
    })
}

/// Reads a single flat label from a generation.
///
/// An exact normalized match is well formed. Otherwise a label that occurs
/// as a whole word, and is the only one that does, is accepted with the
/// malformed flag; zero or several hits give [`NO_MATCH`].
pub fn parse_classification_generation(generation: &str, scheme: &LabelScheme) -> ParsedPrediction {
    let mut notes = Notes::default();
    let norm = normalize(generation);
    if let Some(l) = scheme.labels.iter().find(|l| normalize(l) == norm) {
        return ParsedPrediction::new(scheme.task_kind, Prediction::Label(l.clone()), notes);
    }
    let folded = generation.to_lowercase();
    let hits: Vec<&String> = scheme
        .labels
        .iter()
        .filter(|l| whole_word_match(&folded, &normalize(l)))
        .collect();
    let label = match hits.as_slice() {
        [one] => {
            notes.flag(|| format!("label `{one}` found inside surrounding text"));
            (*one).clone()
        }
        [] => {
            notes.flag(|| "no scheme label found".to_string());
            NO_MATCH.to_string()
        }
        many => {
            notes.flag(|| format!("{} scheme labels found", many.len()));
            NO_MATCH.to_string()
        }
    };
    ParsedPrediction::new(scheme.task_kind, Prediction::Label(label), notes)
}

/// Reads a comma- or newline-separated label set.
pub fn parse_multilabel_generation(generation: &str, scheme: &LabelScheme) -> ParsedPrediction {
    let mut notes = Notes::default();
    let normalized: Vec<String> = scheme.labels.iter().map(|l| normalize(l)).collect();
    let mut hit = vec![false; scheme.labels.len()];
    for fragment in generation.split([',', '\n']) {
        let f = normalize(fragment);
        if f.is_empty() {
            continue;
        }
        match normalized.iter().position(|l| *l == f) {
            Some(i) if hit[i] => notes.flag(|| format!("label `{}` repeated", scheme.labels[i])),
            Some(i) => hit[i] = true,
            None => notes.flag(|| format!("unmatched fragment `{}`", clip(fragment.trim()))),
        }
    }
    let set: Vec<String> = scheme
        .labels
        .iter()
        .zip(&hit)
        .filter(|(_, &h)| h)
        .map(|(l, _)| l.clone())
        .collect();
    if set.is_empty() && !notes.malformed {
        notes.flag(|| "no labels".to_string());
    }
    ParsedPrediction::new(scheme.task_kind, Prediction::LabelSet(set), notes)
}

/// QA generations are kept verbatim (trimmed); only emptiness is malformed.
pub fn parse_qa_generation(generation: &str) -> ParsedPrediction {
    let mut notes = Notes::default();
    let text = generation.trim();
    if text.is_empty() {
        notes.flag(|| "empty answer".to_string());
    }
    ParsedPrediction::new(TaskKind::Qa, Prediction::Text(text.to_string()), notes)
}
