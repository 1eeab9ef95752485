//! Source corpus parsers and relation-extraction concept tagging.
//!
//! Every parser is total: it returns examples or an [`IngestError`] carrying
//! a 1-based line number. Example ids are `<dataset>/<split>/<local id>`,
//! where the local id is the file's own id (RE) or a zero-padded sequence
//! number (everything else).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::schema::{
    concept_tags, is_valid_token, DocExample, LabelScheme, NerExample, NliExample, NliFields,
    NliLabel, QaExample, ReExample, Split,
};

/// Dataset name and split stamped on every parsed example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceInfo {
    pub dataset: String,
    pub split: Split,
}

impl SourceInfo {
    pub fn new(dataset: impl Into<String>, split: Split) -> Self {
        Self {
            dataset: dataset.into(),
            split,
        }
    }

    fn id(&self, local: impl core::fmt::Display) -> String {
        format!("{}/{}/{}", self.dataset, self.split, local)
    }

    fn seq_id(&self, n: usize) -> String {
        self.id(format_args!("{n:06}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestErrorKind {
    #[error("invalid UTF-8")]
    Utf8,
    #[error("line has no TAB separator")]
    MissingTab,
    #[error("token contains whitespace: `{0}`")]
    TokenWhitespace(String),
    #[error("empty token")]
    EmptyToken,
    #[error("label not in scheme: `{0}`")]
    LabelNotInScheme(String),
    #[error("scheme `{0}` is not a BIO scheme")]
    NotBio(String),
    #[error("expected {expected} TAB-separated columns, found {found}")]
    Columns { expected: usize, found: usize },
    #[error("sentence has no concept tag of the form @name$")]
    MissingConceptTag,
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing or non-string field `{0}`")]
    MissingField(String),
    #[error("empty field `{0}`")]
    EmptyField(String),
    #[error("unknown gold label `{0}`")]
    UnknownGoldLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct IngestError {
    pub line: usize,
    pub kind: IngestErrorKind,
}

impl IngestError {
    fn at(line: usize, kind: IngestErrorKind) -> Self {
        Self { line, kind }
    }
}

/// Decodes raw bytes, reporting the line of the first invalid sequence.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str, IngestError> {
    core::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        IngestError::at(line, IngestErrorKind::Utf8)
    })
}

fn lines(contents: &str) -> impl Iterator<Item = (usize, &str)> {
    contents
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

/// Parses `token<TAB>label` lines with blank-line sentence breaks.
pub fn parse_conll(
    contents: &str,
    scheme: &LabelScheme,
    source: &SourceInfo,
) -> Result<Vec<NerExample>, IngestError> {
    if !scheme.bio {
        return Err(IngestError::at(
            0,
            IngestErrorKind::NotBio(scheme.name.clone()),
        ));
    }
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<String>| {
        if !tokens.is_empty() {
            out.push(NerExample {
                id: source.seq_id(out.len()),
                source_dataset: source.dataset.clone(),
                split: source.split,
                tokens: core::mem::take(tokens),
                labels: core::mem::take(labels),
            });
        }
    };
    for (n, line) in lines(contents) {
        if line.trim().is_empty() {
            flush(&mut tokens, &mut labels);
            continue;
        }
        let (token, label) = line
            .split_once('\t')
            .ok_or(IngestError::at(n, IngestErrorKind::MissingTab))?;
        if token.is_empty() {
            return Err(IngestError::at(n, IngestErrorKind::EmptyToken));
        }
        if !is_valid_token(token) {
            return Err(IngestError::at(
                n,
                IngestErrorKind::TokenWhitespace(token.to_string()),
            ));
        }
        if !scheme.contains(label) {
            return Err(IngestError::at(
                n,
                IngestErrorKind::LabelNotInScheme(label.to_string()),
            ));
        }
        tokens.push(token.to_string());
        labels.push(label.to_string());
    }
    flush(&mut tokens, &mut labels);
    Ok(out)
}

/// Inverse of [`parse_conll`], used to write fixtures.
pub fn serialize_conll(examples: &[NerExample]) -> String {
    let mut s = String::new();
    for (i, ex) in examples.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        for (t, l) in ex.tokens.iter().zip(&ex.labels) {
            s.push_str(t);
            s.push('\t');
            s.push_str(l);
            s.push('\n');
        }
    }
    s
}

/// A concept mention to anonymize, as byte offsets into the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSpan {
    pub start: usize,
    pub end: usize,
    pub concept: String,
}

impl ConceptSpan {
    pub fn new(start: usize, end: usize, concept: impl Into<String>) -> Self {
        Self {
            start,
            end,
            concept: concept.into(),
        }
    }

    /// The replacement text, e.g. `@problem$`.
    pub fn tag(&self) -> String {
        format!("@{}$", self.concept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("span {start}..{end} is empty, out of bounds or not on a char boundary")]
    OutOfBounds { start: usize, end: usize },
    #[error("spans {0:?} and {1:?} overlap")]
    Overlap((usize, usize), (usize, usize)),
    #[error("concept name `{0}` must match [a-z_]+")]
    BadConcept(String),
    #[error("text already contains a concept tag at byte {0}")]
    PreexistingTag(usize),
}

/// Replaces each span's surface text with `@<concept>$`.
pub fn insert_concept_tags(text: &str, spans: &[ConceptSpan]) -> Result<String, TagError> {
    if let Some(&(pos, _)) = concept_tags(text).first() {
        return Err(TagError::PreexistingTag(pos));
    }
    let mut order: Vec<&ConceptSpan> = spans.iter().collect();
    order.sort_by_key(|s| (s.start, s.end));
    for s in &order {
        if s.start >= s.end
            || s.end > text.len()
            || !text.is_char_boundary(s.start)
            || !text.is_char_boundary(s.end)
        {
            return Err(TagError::OutOfBounds {
                start: s.start,
                end: s.end,
            });
        }
        if s.concept.is_empty()
            || !s
                .concept
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b == b'_')
        {
            return Err(TagError::BadConcept(s.concept.clone()));
        }
    }
    for w in order.windows(2) {
        if w[1].start < w[0].end {
            return Err(TagError::Overlap(
                (w[0].start, w[0].end),
                (w[1].start, w[1].end),
            ));
        }
    }
    let mut out = text.to_string();
    // Right to left so earlier offsets stay valid.
    for s in order.iter().rev() {
        out.replace_range(s.start..s.end, &s.tag());
    }
    Ok(out)
}

/// Parses `id<TAB>tagged sentence<TAB>label` lines.
pub fn parse_re_file(
    contents: &str,
    scheme: &LabelScheme,
    source: &SourceInfo,
) -> Result<Vec<ReExample>, IngestError> {
    let mut out: Vec<ReExample> = Vec::new();
    for (n, line) in lines(contents) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(IngestError::at(
                n,
                IngestErrorKind::Columns {
                    expected: 3,
                    found: cols.len(),
                },
            ));
        }
        let (local, text, label) = (cols[0].trim(), cols[1], cols[2].trim());
        if local.is_empty() {
            return Err(IngestError::at(n, IngestErrorKind::EmptyField("id".into())));
        }
        if text.trim().is_empty() {
            return Err(IngestError::at(
                n,
                IngestErrorKind::EmptyField("text".into()),
            ));
        }
        if concept_tags(text).is_empty() {
            return Err(IngestError::at(n, IngestErrorKind::MissingConceptTag));
        }
        if !scheme.contains(label) {
            return Err(IngestError::at(
                n,
                IngestErrorKind::LabelNotInScheme(label.to_string()),
            ));
        }
        let id = source.id(local);
        if out.iter().any(|e| e.id == id) {
            return Err(IngestError::at(
                n,
                IngestErrorKind::DuplicateId(local.into()),
            ));
        }
        out.push(ReExample {
            id,
            source_dataset: source.dataset.clone(),
            split: source.split,
            text: text.to_string(),
            label: label.to_string(),
        });
    }
    Ok(out)
}

fn json_lines(
    contents: &str,
) -> impl Iterator<Item = (usize, Result<Map<String, Value>, IngestError>)> + '_ {
    lines(contents)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let parsed = match serde_json::from_str::<Value>(l) {
                Ok(Value::Object(m)) => Ok(m),
                Ok(_) => Err(IngestError::at(
                    n,
                    IngestErrorKind::Json("expected an object".into()),
                )),
                Err(e) => Err(IngestError::at(n, IngestErrorKind::Json(e.to_string()))),
            };
            (n, parsed)
        })
}

fn str_field<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<&'a str, IngestError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        _ => Err(IngestError::at(
            line,
            IngestErrorKind::MissingField(key.into()),
        )),
    }
}

fn nonempty<'a>(s: &'a str, key: &str, line: usize) -> Result<&'a str, IngestError> {
    if s.trim().is_empty() {
        Err(IngestError::at(
            line,
            IngestErrorKind::EmptyField(key.into()),
        ))
    } else {
        Ok(s)
    }
}

/// Parses premise/hypothesis JSONL; gold labels are case-folded onto the
/// three-way set.
pub fn parse_nli(
    contents: &str,
    fields: &NliFields,
    source: &SourceInfo,
) -> Result<Vec<NliExample>, IngestError> {
    let mut out = Vec::new();
    for (n, obj) in json_lines(contents) {
        let obj = obj?;
        let premise = nonempty(str_field(&obj, &fields.premise, n)?, &fields.premise, n)?;
        let hypothesis = nonempty(
            str_field(&obj, &fields.hypothesis, n)?,
            &fields.hypothesis,
            n,
        )?;
        let gold = str_field(&obj, &fields.label, n)?;
        let label = NliLabel::from_loose(gold)
            .ok_or_else(|| IngestError::at(n, IngestErrorKind::UnknownGoldLabel(gold.into())))?;
        out.push(NliExample {
            id: source.seq_id(out.len()),
            source_dataset: source.dataset.clone(),
            split: source.split,
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            label: label.as_str().to_string(),
        });
    }
    Ok(out)
}

/// Parses `{"text", "labels": [...]}` JSONL for document classification.
pub fn parse_doc(
    contents: &str,
    scheme: &LabelScheme,
    source: &SourceInfo,
) -> Result<Vec<DocExample>, IngestError> {
    let mut out = Vec::new();
    for (n, obj) in json_lines(contents) {
        let obj = obj?;
        let text = nonempty(str_field(&obj, "text", n)?, "text", n)?;
        let raw = match obj.get("labels") {
            Some(Value::Array(a)) => a,
            _ => {
                return Err(IngestError::at(
                    n,
                    IngestErrorKind::MissingField("labels".into()),
                ))
            }
        };
        if raw.is_empty() {
            return Err(IngestError::at(
                n,
                IngestErrorKind::EmptyField("labels".into()),
            ));
        }
        let mut labels: Vec<String> = Vec::with_capacity(raw.len());
        for v in raw {
            let l = v.as_str().ok_or_else(|| {
                IngestError::at(n, IngestErrorKind::MissingField("labels".into()))
            })?;
            if !scheme.contains(l) {
                return Err(IngestError::at(
                    n,
                    IngestErrorKind::LabelNotInScheme(l.to_string()),
                ));
            }
            if labels.iter().any(|x| x == l) {
                return Err(IngestError::at(
                    n,
                    IngestErrorKind::DuplicateLabel(l.into()),
                ));
            }
            labels.push(l.to_string());
        }
        out.push(DocExample {
            id: source.seq_id(out.len()),
            source_dataset: source.dataset.clone(),
            split: source.split,
            text: text.to_string(),
            labels,
        });
    }
    Ok(out)
}

/// Parses instruction/input/output triples (ChatDoctor and PMC style).
///
/// The question is `input` when non-empty, otherwise `instruction`; in the
/// former case `instruction` becomes the context.
pub fn parse_qa(contents: &str, source: &SourceInfo) -> Result<Vec<QaExample>, IngestError> {
    let mut out = Vec::new();
    for (n, obj) in json_lines(contents) {
        let obj = obj?;
        let answer = nonempty(str_field(&obj, "output", n)?, "output", n)?;
        let instruction = match obj.get("instruction") {
            Some(Value::String(s)) => s.as_str(),
            None | Some(Value::Null) => "",
            _ => {
                return Err(IngestError::at(
                    n,
                    IngestErrorKind::MissingField("instruction".into()),
                ))
            }
        };
        let input = match obj.get("input") {
            Some(Value::String(s)) => s.as_str(),
            None | Some(Value::Null) => "",
            _ => {
                return Err(IngestError::at(
                    n,
                    IngestErrorKind::MissingField("input".into()),
                ))
            }
        };
        let (question, context) = if input.trim().is_empty() {
            (instruction, None)
        } else {
            let ctx = (!instruction.trim().is_empty()).then(|| instruction.to_string());
            (input, ctx)
        };
        let question = nonempty(question, "instruction", n)?;
        out.push(QaExample {
            id: source.seq_id(out.len()),
            source_dataset: source.dataset.clone(),
            split: source.split,
            question: question.to_string(),
            context,
            answer: answer.to_string(),
        });
    }
    Ok(out)
}
