//! Canonical domain types shared by every stage of the pipeline.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genparse::NO_MATCH;

/// The five task families covered by the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    Ner,
    Re,
    Nli,
    DocCls,
    Qa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Ner,
        TaskKind::Re,
        TaskKind::Nli,
        TaskKind::DocCls,
        TaskKind::Qa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ner => "NER",
            TaskKind::Re => "RE",
            TaskKind::Nli => "NLI",
            TaskKind::DocCls => "DOC_CLS",
            TaskKind::Qa => "QA",
        }
    }

    /// Short name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            TaskKind::DocCls => "CLS",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("duplicate label or category `{0}`")]
    Duplicate(String),
    #[error("category `{0}` is empty or contains whitespace")]
    InvalidCategory(String),
    #[error("label `{0}` is empty or contains a comma or line break")]
    InvalidLabel(String),
    #[error("flat scheme needs at least one label")]
    Empty,
    #[error("`{0}` is reserved")]
    Reserved(String),
}

/// Expands category names into BIO labels.
///
/// No categories gives the bare `[O, B, I]` scheme. Otherwise `O` is followed
/// by `B-c`, `I-c` for each category in input order.
pub fn expand_bio_scheme<S: AsRef<str>>(categories: &[S]) -> Result<Vec<String>, SchemeError> {
    if categories.is_empty() {
        return Ok(["O", "B", "I"].iter().map(|s| s.to_string()).collect());
    }
    let mut labels = Vec::with_capacity(1 + 2 * categories.len());
    labels.push("O".to_string());
    for (i, c) in categories.iter().enumerate() {
        let c = c.as_ref();
        if c.is_empty() || c.chars().any(char::is_whitespace) {
            return Err(SchemeError::InvalidCategory(c.to_string()));
        }
        if categories[..i].iter().any(|p| p.as_ref() == c) {
            return Err(SchemeError::Duplicate(c.to_string()));
        }
        labels.push(format!("B-{c}"));
        labels.push(format!("I-{c}"));
    }
    Ok(labels)
}

/// A task's label inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct LabelScheme {
    pub name: String,
    pub task_kind: TaskKind,
    pub categories: Vec<String>,
    pub labels: Vec<String>,
    pub bio: bool,
}

#[derive(Deserialize)]
struct RawScheme {
    name: String,
    task_kind: TaskKind,
    #[serde(default)]
    categories: Vec<String>,
    #[serde(default)]
    labels: Vec<String>,
    bio: bool,
}

impl TryFrom<RawScheme> for LabelScheme {
    type Error = SchemeError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        let scheme = if raw.bio {
            LabelScheme::bio(raw.name, raw.task_kind, raw.categories)?
        } else {
            LabelScheme::flat(raw.name, raw.task_kind, raw.labels)?
        };
        Ok(scheme)
    }
}

impl LabelScheme {
    pub fn bio(
        name: impl Into<String>,
        task_kind: TaskKind,
        categories: Vec<String>,
    ) -> Result<Self, SchemeError> {
        let labels = expand_bio_scheme(&categories)?;
        Ok(Self {
            name: name.into(),
            task_kind,
            categories,
            labels,
            bio: true,
        })
    }

    pub fn flat(
        name: impl Into<String>,
        task_kind: TaskKind,
        labels: Vec<String>,
    ) -> Result<Self, SchemeError> {
        if labels.is_empty() {
            return Err(SchemeError::Empty);
        }
        for (i, l) in labels.iter().enumerate() {
            if l.trim().is_empty() || l.contains(',') || l.contains('\n') || l.contains('\r') {
                return Err(SchemeError::InvalidLabel(l.clone()));
            }
            if l == NO_MATCH {
                return Err(SchemeError::Reserved(l.clone()));
            }
            if labels[..i].contains(l) {
                return Err(SchemeError::Duplicate(l.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            task_kind,
            categories: Vec::new(),
            labels,
            bio: false,
        })
    }

    /// The closed three-way inference scheme.
    pub fn nli(name: impl Into<String>) -> Self {
        Self::flat(
            name,
            TaskKind::Nli,
            NliLabel::ALL
                .iter()
                .map(|l| l.as_str().to_string())
                .collect(),
        )
        .expect("fixed labels are valid")
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Human-readable inventory used to fill the `{labels}` placeholder.
    pub fn describe(&self) -> String {
        self.labels.join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [
        NliLabel::Entailment,
        NliLabel::Contradiction,
        NliLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "Entailment",
            NliLabel::Contradiction => "Contradiction",
            NliLabel::Neutral => "Neutral",
        }
    }

    /// Case-insensitive lookup.
    pub fn from_loose(s: &str) -> Option<NliLabel> {
        let s = s.trim();
        NliLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerExample {
    pub id: String,
    pub source_dataset: String,
    pub split: Split,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReExample {
    pub id: String,
    pub source_dataset: String,
    pub split: Split,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliExample {
    pub id: String,
    pub source_dataset: String,
    pub split: Split,
    pub premise: String,
    pub hypothesis: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocExample {
    pub id: String,
    pub source_dataset: String,
    pub split: Split,
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub source_dataset: String,
    pub split: Split,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub answer: String,
}

/// Format-neutral example handed from ingestion to templating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task_kind")]
pub enum CanonicalExample {
    #[serde(rename = "NER")]
    Ner(NerExample),
    #[serde(rename = "RE")]
    Re(ReExample),
    #[serde(rename = "NLI")]
    Nli(NliExample),
    #[serde(rename = "DOC_CLS")]
    Doc(DocExample),
    #[serde(rename = "QA")]
    Qa(QaExample),
}

macro_rules! common_field {
    ($self:ident, $field:ident) => {
        match $self {
            CanonicalExample::Ner(e) => &e.$field,
            CanonicalExample::Re(e) => &e.$field,
            CanonicalExample::Nli(e) => &e.$field,
            CanonicalExample::Doc(e) => &e.$field,
            CanonicalExample::Qa(e) => &e.$field,
        }
    };
}

impl CanonicalExample {
    pub fn task_kind(&self) -> TaskKind {
        match self {
            CanonicalExample::Ner(_) => TaskKind::Ner,
            CanonicalExample::Re(_) => TaskKind::Re,
            CanonicalExample::Nli(_) => TaskKind::Nli,
            CanonicalExample::Doc(_) => TaskKind::DocCls,
            CanonicalExample::Qa(_) => TaskKind::Qa,
        }
    }

    pub fn id(&self) -> &str {
        common_field!(self, id)
    }

    pub fn source_dataset(&self) -> &str {
        common_field!(self, source_dataset)
    }

    pub fn split(&self) -> Split {
        *common_field!(self, split)
    }
}

impl From<NerExample> for CanonicalExample {
    fn from(e: NerExample) -> Self {
        CanonicalExample::Ner(e)
    }
}
impl From<ReExample> for CanonicalExample {
    fn from(e: ReExample) -> Self {
        CanonicalExample::Re(e)
    }
}
impl From<NliExample> for CanonicalExample {
    fn from(e: NliExample) -> Self {
        CanonicalExample::Nli(e)
    }
}
impl From<DocExample> for CanonicalExample {
    fn from(e: DocExample) -> Self {
        CanonicalExample::Doc(e)
    }
}
impl From<QaExample> for CanonicalExample {
    fn from(e: QaExample) -> Self {
        CanonicalExample::Qa(e)
    }
}

/// Identifies the serializer used for a record's output, so the matching
/// parser can be picked at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// One `token: LABEL` line per input token.
    TokenLabelLines,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub task_kind: TaskKind,
    pub source_dataset: String,
    pub source_id: String,
    pub template_id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_format: Option<OutputFormat>,
}

/// One Alpaca-style sample. Field order is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: RecordMeta,
}

impl InstructionRecord {
    /// Key used by the evaluation runner, prediction files and logs.
    pub fn record_id(&self) -> &str {
        &self.meta.source_id
    }
}

/// A single invariant violation found by [`validate_example`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyField(&'static str),
    LengthMismatch { tokens: usize, labels: usize },
    EmptySequence,
    BadToken { index: usize, token: String },
    LabelNotInScheme(String),
    MissingConceptTag,
    TaskMismatch { scheme: TaskKind, example: TaskKind },
    DuplicateLabel(String),
    EmptyInput,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyField(name) => write!(f, "empty field `{name}`"),
            Violation::LengthMismatch { tokens, labels } => {
                write!(f, "length mismatch: {tokens} tokens, {labels} labels")
            }
            Violation::EmptySequence => f.write_str("empty token sequence"),
            Violation::BadToken { index, token } => {
                write!(f, "token {index} `{token}` is empty or contains whitespace")
            }
            Violation::LabelNotInScheme(l) => write!(f, "label not in scheme: `{l}`"),
            Violation::MissingConceptTag => f.write_str("no concept tag of the form @name$"),
            Violation::TaskMismatch { scheme, example } => {
                write!(f, "scheme is for {scheme}, example is {example}")
            }
            Violation::DuplicateLabel(l) => write!(f, "duplicate label `{l}`"),
            Violation::EmptyInput => f.write_str("empty input on a non-QA record"),
        }
    }
}

/// True when `token` can appear in a whitespace-joined NER input.
pub fn is_valid_token(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_whitespace)
}

/// Byte ranges of every `@name$` concept tag (name matching `[a-z_]+`).
pub fn concept_tags(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'@' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'$' {
                out.push((i, j + 1));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn check_nonempty(v: &mut Vec<Violation>, name: &'static str, value: &str) {
    if value.trim().is_empty() {
        v.push(Violation::EmptyField(name));
    }
}

/// Checks `example` against its type invariants and `scheme`. Never fails;
/// violations are returned as data.
pub fn validate_example(
    example: &CanonicalExample,
    scheme: &LabelScheme,
) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    check_nonempty(&mut v, "id", example.id());
    check_nonempty(&mut v, "source_dataset", example.source_dataset());
    // QA carries no labels, so any scheme is acceptable for it.
    if example.task_kind() != scheme.task_kind && example.task_kind() != TaskKind::Qa {
        v.push(Violation::TaskMismatch {
            scheme: scheme.task_kind,
            example: example.task_kind(),
        });
    }
    match example {
        CanonicalExample::Ner(e) => {
            if e.tokens.is_empty() {
                v.push(Violation::EmptySequence);
            }
            if e.tokens.len() != e.labels.len() {
                v.push(Violation::LengthMismatch {
                    tokens: e.tokens.len(),
                    labels: e.labels.len(),
                });
            }
            for (index, t) in e.tokens.iter().enumerate() {
                if !is_valid_token(t) {
                    v.push(Violation::BadToken {
                        index,
                        token: t.clone(),
                    });
                }
            }
            for l in &e.labels {
                if !scheme.contains(l) {
                    v.push(Violation::LabelNotInScheme(l.clone()));
                }
            }
        }
        CanonicalExample::Re(e) => {
            check_nonempty(&mut v, "text", &e.text);
            if concept_tags(&e.text).is_empty() {
                v.push(Violation::MissingConceptTag);
            }
            if !scheme.contains(&e.label) {
                v.push(Violation::LabelNotInScheme(e.label.clone()));
            }
        }
        CanonicalExample::Nli(e) => {
            check_nonempty(&mut v, "premise", &e.premise);
            check_nonempty(&mut v, "hypothesis", &e.hypothesis);
            let closed = NliLabel::ALL.iter().any(|l| l.as_str() == e.label);
            if !closed || !scheme.contains(&e.label) {
                v.push(Violation::LabelNotInScheme(e.label.clone()));
            }
        }
        CanonicalExample::Doc(e) => {
            check_nonempty(&mut v, "text", &e.text);
            if e.labels.is_empty() {
                v.push(Violation::EmptyField("labels"));
            }
            for (i, l) in e.labels.iter().enumerate() {
                if !scheme.contains(l) {
                    v.push(Violation::LabelNotInScheme(l.clone()));
                }
                if e.labels[..i].contains(l) {
                    v.push(Violation::DuplicateLabel(l.clone()));
                }
            }
        }
        CanonicalExample::Qa(e) => {
            check_nonempty(&mut v, "question", &e.question);
            check_nonempty(&mut v, "answer", &e.answer);
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Record-level invariants that do not need the source example.
pub fn validate_record(record: &InstructionRecord) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    check_nonempty(&mut v, "instruction", &record.instruction);
    check_nonempty(&mut v, "output", &record.output);
    check_nonempty(&mut v, "meta.source_id", &record.meta.source_id);
    if record.input.is_empty() && record.meta.task_kind != TaskKind::Qa {
        v.push(Violation::EmptyInput);
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// On-disk source layout a manifest points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Conll,
    ReTsv,
    NliJsonl,
    DocJsonl,
    QaJsonl,
}

impl SourceFormat {
    pub fn task_kind(self) -> TaskKind {
        match self {
            SourceFormat::Conll => TaskKind::Ner,
            SourceFormat::ReTsv => TaskKind::Re,
            SourceFormat::NliJsonl => TaskKind::Nli,
            SourceFormat::DocJsonl => TaskKind::DocCls,
            SourceFormat::QaJsonl => TaskKind::Qa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemeSpec {
    #[serde(default)]
    pub bio: bool,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Field names for inference JSONL; defaults follow the corpus's native keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliFields {
    #[serde(default = "NliFields::default_premise")]
    pub premise: String,
    #[serde(default = "NliFields::default_hypothesis")]
    pub hypothesis: String,
    #[serde(default = "NliFields::default_label")]
    pub label: String,
}

impl NliFields {
    fn default_premise() -> String {
        "sentence1".into()
    }
    fn default_hypothesis() -> String {
        "sentence2".into()
    }
    fn default_label() -> String {
        "gold_label".into()
    }
}

impl Default for NliFields {
    fn default() -> Self {
        Self {
            premise: Self::default_premise(),
            hypothesis: Self::default_hypothesis(),
            label: Self::default_label(),
        }
    }
}

/// Describes one source dataset: its task, label scheme, format and files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub scheme: SchemeSpec,
    pub format: SourceFormat,
    /// Split name to path, relative to the manifest file.
    pub files: BTreeMap<Split, String>,
    #[serde(default)]
    pub nli_fields: NliFields,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("manifest `{name}`: format {format:?} does not hold {task} data")]
    FormatMismatch {
        name: String,
        format: SourceFormat,
        task: TaskKind,
    },
    #[error("manifest `{0}`: scheme: {1}")]
    Scheme(String, SchemeError),
}

impl DatasetManifest {
    pub fn label_scheme(&self) -> Result<LabelScheme, ManifestError> {
        if self.format.task_kind() != self.task_kind {
            return Err(ManifestError::FormatMismatch {
                name: self.name.clone(),
                format: self.format,
                task: self.task_kind,
            });
        }
        let wrap = |e| ManifestError::Scheme(self.name.clone(), e);
        match self.task_kind {
            TaskKind::Ner => {
                LabelScheme::bio(&self.name, TaskKind::Ner, self.scheme.categories.clone())
                    .map_err(wrap)
            }
            TaskKind::Nli if self.scheme.labels.is_empty() => Ok(LabelScheme::nli(&self.name)),
            TaskKind::Qa if self.scheme.labels.is_empty() => {
                // QA has no label inventory; a placeholder keeps the type uniform.
                LabelScheme::flat(&self.name, TaskKind::Qa, alloc::vec!["answer".into()])
                    .map_err(wrap)
            }
            kind => LabelScheme::flat(&self.name, kind, self.scheme.labels.clone()).map_err(wrap),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn bare_bio_scheme() {
        assert_eq!(expand_bio_scheme::<&str>(&[]).unwrap(), s(&["O", "B", "I"]));
    }

    #[test]
    fn single_category() {
        assert_eq!(
            expand_bio_scheme(&["PROBLEM"]).unwrap(),
            s(&["O", "B-PROBLEM", "I-PROBLEM"])
        );
    }

    #[test]
    fn six_categories_give_thirteen_labels() {
        let cats = [
            "PROBLEM",
            "TEST",
            "TREATMENT",
            "CLINICAL_DEPT",
            "EVIDENTIAL",
            "OCCURRENCE",
        ];
        assert_eq!(expand_bio_scheme(&cats).unwrap().len(), 13);
    }

    #[test]
    fn duplicate_category_rejected() {
        assert_eq!(
            expand_bio_scheme(&["A", "B", "A"]),
            Err(SchemeError::Duplicate("A".into()))
        );
        assert!(matches!(
            expand_bio_scheme(&["two words"]),
            Err(SchemeError::InvalidCategory(_))
        ));
    }

    #[test]
    fn flat_scheme_rejects_sentinel_and_commas() {
        assert!(LabelScheme::flat("x", TaskKind::Re, s(&["NO_MATCH"])).is_err());
        assert!(LabelScheme::flat("x", TaskKind::Re, s(&["a,b"])).is_err());
        assert!(LabelScheme::flat("x", TaskKind::Re, vec![]).is_err());
        assert!(LabelScheme::flat("x", TaskKind::Re, s(&["a", "a"])).is_err());
    }

    #[test]
    fn scheme_deserialization_validates() {
        let ok: LabelScheme = serde_json::from_str(
            r#"{"name":"i2b2","task_kind":"NER","categories":["TEST"],"bio":true}"#,
        )
        .unwrap();
        assert_eq!(ok.labels, s(&["O", "B-TEST", "I-TEST"]));
        let bad = serde_json::from_str::<LabelScheme>(
            r#"{"name":"x","task_kind":"RE","labels":[],"bio":false}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn ner_length_mismatch() {
        let scheme = LabelScheme::bio("ncbi", TaskKind::Ner, vec![]).unwrap();
        let ex = CanonicalExample::Ner(NerExample {
            id: "1".into(),
            source_dataset: "ncbi".into(),
            split: Split::Train,
            tokens: s(&["a", "b", "c"]),
            labels: s(&["O", "B"]),
        });
        let err = validate_example(&ex, &scheme).unwrap_err();
        assert!(err
            .iter()
            .any(|v| v.to_string().contains("length mismatch")));
    }

    #[test]
    fn nli_label_outside_scheme() {
        let scheme = LabelScheme::nli("mednli");
        let ex = CanonicalExample::Nli(NliExample {
            id: "1".into(),
            source_dataset: "mednli".into(),
            split: Split::Test,
            premise: "p".into(),
            hypothesis: "h".into(),
            label: "entails".into(),
        });
        let err = validate_example(&ex, &scheme).unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].to_string().contains("label not in scheme"));
    }

    #[test]
    fn well_formed_re_example() {
        let scheme = LabelScheme::flat("i2b2-2010", TaskKind::Re, s(&["TeRP", "NONE"])).unwrap();
        let ex = CanonicalExample::Re(ReExample {
            id: "r1".into(),
            source_dataset: "i2b2-2010".into(),
            split: Split::Train,
            text: "the @test$ revealed @problem$".into(),
            label: "TeRP".into(),
        });
        assert_eq!(validate_example(&ex, &scheme), Ok(()));
    }

    #[test]
    fn concept_tag_scan() {
        assert_eq!(concept_tags("a @test$ b"), vec![(2, 8)]);
        assert!(concept_tags("@$ @Test$ @test").is_empty());
        assert_eq!(concept_tags("@a_b$@c$").len(), 2);
    }

    #[test]
    fn canonical_json_tag() {
        let ex = CanonicalExample::Qa(QaExample {
            id: "q".into(),
            source_dataset: "chatdoctor".into(),
            split: Split::Train,
            question: "why?".into(),
            context: None,
            answer: "because".into(),
        });
        let js = serde_json::to_string(&ex).unwrap();
        assert!(js.starts_with(r#"{"task_kind":"QA","id":"q""#));
        assert_eq!(serde_json::from_str::<CanonicalExample>(&js).unwrap(), ex);
    }

    #[test]
    fn manifest_scheme() {
        let m: DatasetManifest = serde_json::from_str(
            r#"{"name":"gad","task_kind":"RE","scheme":{"labels":["0","1"]},
                "format":"re_tsv","files":{"train":"gad/train.tsv"}}"#,
        )
        .unwrap();
        let scheme = m.label_scheme().unwrap();
        assert_eq!(scheme.labels, s(&["0", "1"]));
        assert_eq!(m.nli_fields, NliFields::default());
    }
}
