//! Instruction pools, output serialization and Alpaca prompt rendering.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::schema::{
    CanonicalExample, InstructionRecord, LabelScheme, OutputFormat, RecordMeta, TaskKind,
};

pub const LABELS_PLACEHOLDER: &str = "{labels}";

pub const MIN_POOL: usize = 5;
pub const MAX_POOL: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("pool `{dataset}` has {size} templates, expected {MIN_POOL}..={MAX_POOL}")]
    PoolSize { dataset: String, size: usize },
    #[error("pool `{dataset}`: duplicate template id `{id}`")]
    DuplicateId { dataset: String, id: String },
    #[error("template `{0}` has empty instruction text")]
    EmptyText(String),
    #[error("template `{0}` uses a placeholder other than {{labels}}")]
    UnknownPlaceholder(String),
    #[error("pool is for `{pool}` but example comes from `{example}`")]
    DatasetMismatch { pool: String, example: String },
    #[error("pool is for {pool} but example is {example}")]
    TaskMismatch { pool: TaskKind, example: TaskKind },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub dataset: String,
    pub task_kind: TaskKind,
    pub instruction_text: String,
}

impl Template {
    /// Instruction text with `{labels}` replaced by the scheme's inventory.
    pub fn expand(&self, scheme: &LabelScheme) -> String {
        self.instruction_text
            .replace(LABELS_PLACEHOLDER, &scheme.describe())
    }
}

/// On-disk shape of a pool: one JSON file per dataset.
#[derive(Serialize, Deserialize)]
struct RawPool {
    dataset: String,
    task_kind: TaskKind,
    templates: Vec<RawTemplate>,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    id: String,
    instruction: String,
}

/// Between five and ten instructions for one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPool", into = "RawPool")]
pub struct TemplatePool {
    pub dataset: String,
    pub task_kind: TaskKind,
    templates: Vec<Template>,
}

impl TryFrom<RawPool> for TemplatePool {
    type Error = TemplateError;

    fn try_from(raw: RawPool) -> Result<Self, TemplateError> {
        let templates = raw
            .templates
            .into_iter()
            .map(|t| Template {
                id: t.id,
                dataset: raw.dataset.clone(),
                task_kind: raw.task_kind,
                instruction_text: t.instruction,
            })
            .collect();
        TemplatePool::new(raw.dataset, raw.task_kind, templates)
    }
}

impl From<TemplatePool> for RawPool {
    fn from(p: TemplatePool) -> Self {
        RawPool {
            dataset: p.dataset,
            task_kind: p.task_kind,
            templates: p
                .templates
                .into_iter()
                .map(|t| RawTemplate {
                    id: t.id,
                    instruction: t.instruction_text,
                })
                .collect(),
        }
    }
}

fn has_foreign_placeholder(text: &str) -> bool {
    let stripped = text.replace(LABELS_PLACEHOLDER, "");
    stripped.contains('{') || stripped.contains('}')
}

impl TemplatePool {
    pub fn new(
        dataset: impl Into<String>,
        task_kind: TaskKind,
        templates: Vec<Template>,
    ) -> Result<Self, TemplateError> {
        let dataset = dataset.into();
        if !(MIN_POOL..=MAX_POOL).contains(&templates.len()) {
            return Err(TemplateError::PoolSize {
                dataset,
                size: templates.len(),
            });
        }
        for (i, t) in templates.iter().enumerate() {
            if t.instruction_text.trim().is_empty() {
                return Err(TemplateError::EmptyText(t.id.clone()));
            }
            if has_foreign_placeholder(&t.instruction_text) {
                return Err(TemplateError::UnknownPlaceholder(t.id.clone()));
            }
            if templates[..i].iter().any(|p| p.id == t.id) {
                return Err(TemplateError::DuplicateId {
                    dataset,
                    id: t.id.clone(),
                });
            }
        }
        Ok(Self {
            dataset,
            task_kind,
            templates,
        })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Picks one template uniformly at random.
pub fn choose_template<'p>(pool: &'p TemplatePool, rng: &mut SeededRng) -> &'p Template {
    &pool.templates[rng.below_usize(pool.templates.len())]
}

/// Renders the expected model output for `example`.
///
/// NER gives one `token: LABEL` line per token; RE and NLI the label; document
/// classification the labels in scheme order joined by `", "`; QA the answer.
pub fn serialize_output(example: &CanonicalExample, scheme: &LabelScheme) -> String {
    match example {
        CanonicalExample::Ner(e) => serialize_token_labels(&e.tokens, &e.labels),
        CanonicalExample::Re(e) => e.label.clone(),
        CanonicalExample::Nli(e) => e.label.clone(),
        CanonicalExample::Doc(e) => {
            let mut labels: Vec<&String> = e.labels.iter().collect();
            labels.sort_by_key(|l| scheme.position(l).unwrap_or(usize::MAX));
            let parts: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            parts.join(", ")
        }
        CanonicalExample::Qa(e) => e.answer.clone(),
    }
}

pub fn serialize_token_labels<T: AsRef<str>, L: AsRef<str>>(tokens: &[T], labels: &[L]) -> String {
    let mut s = String::new();
    for (i, (t, l)) in tokens.iter().zip(labels).enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str(t.as_ref());
        s.push_str(": ");
        s.push_str(l.as_ref());
    }
    s
}

/// Surface text shown to the model for `example`.
pub fn render_input(example: &CanonicalExample) -> String {
    match example {
        CanonicalExample::Ner(e) => e.tokens.join(" "),
        CanonicalExample::Re(e) => e.text.clone(),
        CanonicalExample::Nli(e) => format!("Premise: {}\nHypothesis: {}", e.premise, e.hypothesis),
        CanonicalExample::Doc(e) => e.text.clone(),
        CanonicalExample::Qa(e) => match &e.context {
            Some(ctx) => format!("{}\n\nContext: {}", e.question, ctx),
            None => e.question.clone(),
        },
    }
}

/// Builds one instruction record, drawing the template from `rng`.
pub fn build_record(
    example: &CanonicalExample,
    pool: &TemplatePool,
    scheme: &LabelScheme,
    rng: &mut SeededRng,
) -> Result<InstructionRecord, TemplateError> {
    if pool.dataset != example.source_dataset() {
        return Err(TemplateError::DatasetMismatch {
            pool: pool.dataset.clone(),
            example: example.source_dataset().to_string(),
        });
    }
    if pool.task_kind != example.task_kind() {
        return Err(TemplateError::TaskMismatch {
            pool: pool.task_kind,
            example: example.task_kind(),
        });
    }
    let template = choose_template(pool, rng);
    Ok(InstructionRecord {
        instruction: template.expand(scheme),
        input: render_input(example),
        output: serialize_output(example, scheme),
        meta: RecordMeta {
            task_kind: example.task_kind(),
            source_dataset: example.source_dataset().to_string(),
            source_id: example.id().to_string(),
            template_id: template.id.clone(),
            split: example.split(),
            output_format: (example.task_kind() == TaskKind::Ner)
                .then_some(OutputFormat::TokenLabelLines),
        },
    })
}

/// Converts a batch, giving each example its own rng substream keyed by
/// `(seed, example id)`, so output does not depend on batch order or
/// partitioning.
pub fn convert_examples(
    examples: &[CanonicalExample],
    pool: &TemplatePool,
    scheme: &LabelScheme,
    seed: u64,
) -> Result<Vec<InstructionRecord>, TemplateError> {
    examples
        .iter()
        .map(|ex| build_record(ex, pool, scheme, &mut SeededRng::derive(seed, ex.id())))
        .collect()
}

/// The preamble lines of the prompt skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStyle {
    pub with_input: String,
    pub without_input: String,
}

impl Default for PromptStyle {
    fn default() -> Self {
        serde_json::from_str(include_str!("../templates/prompt.json"))
            .expect("bundled prompt style is valid")
    }
}

pub const INSTRUCTION_HEADER: &str = "### Instruction:\n";
pub const INPUT_HEADER: &str = "### Input:\n";
pub const RESPONSE_HEADER: &str = "### Response:\n";

/// Alpaca prompt with the default preamble.
pub fn render_prompt(record: &InstructionRecord, include_output: bool) -> String {
    render_prompt_with(&PromptStyle::default(), record, include_output)
}

pub fn render_prompt_with(
    style: &PromptStyle,
    record: &InstructionRecord,
    include_output: bool,
) -> String {
    let mut s = String::new();
    if record.input.is_empty() {
        s.push_str(&style.without_input);
    } else {
        s.push_str(&style.with_input);
    }
    s.push_str("\n\n");
    s.push_str(INSTRUCTION_HEADER);
    s.push_str(&record.instruction);
    s.push_str("\n\n");
    if !record.input.is_empty() {
        s.push_str(INPUT_HEADER);
        s.push_str(&record.input);
        s.push_str("\n\n");
    }
    s.push_str(RESPONSE_HEADER);
    if include_output {
        s.push_str(&record.output);
    }
    s
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/pools/", $name, ".json")))),*]
    };
}

/// Dataset name and JSON text of every shipped pool.
pub const BUNDLED_POOLS: &[(&str, &str)] = bundled!(
    "ncbi-disease",
    "bc5cdr-disease",
    "bc5cdr-chem",
    "bc2gm",
    "jnlpba",
    "i2b2-2012",
    "i2b2-2010",
    "gad",
    "mednli",
    "hoc",
    "chatdoctor",
    "pmc-llama",
    "pubmedqa",
    "medqa",
    "umls-relations",
    "umls",
);

/// The shipped template library.
pub fn bundled_library() -> Vec<TemplatePool> {
    BUNDLED_POOLS
        .iter()
        .map(|(name, json)| {
            serde_json::from_str(json)
                .unwrap_or_else(|e| panic!("bundled pool `{name}` is invalid: {e}"))
        })
        .collect()
}

pub fn bundled_pool(dataset: &str) -> Option<TemplatePool> {
    BUNDLED_POOLS
        .iter()
        .find(|(name, _)| *name == dataset)
        .and_then(|(_, json)| serde_json::from_str(json).ok())
}
