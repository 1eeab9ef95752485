//! Building blocks for turning classical biomedical NLP corpora into
//! Alpaca-style instruction records and for scoring free-text generations
//! against them.
//!
//! Everything here is pure and allocation-only: no file system, no network,
//! no clock. The `medinstruct` crate layers IO, the evaluation runner and the
//! command line on top.
//!
//! Pipeline, in module order:
//!
//! * [`schema`]: task kinds, label schemes, canonical examples, instruction records.
//! * [`ingest`]: source formats (CoNLL, RE TSV, NLI/doc/QA JSONL) to canonical examples.
//! * [`template`]: instruction pools, output serialization, prompt rendering.
//! * [`mix`]: quota sampling, seeded shuffling, digests, training recipe.
//! * [`genparse`]: free-text generation back to structured predictions.
//! * [`metrics`] and [`report`]: entity-level PRF, accuracy, report tables.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod genparse;
pub mod ingest;
pub mod metrics;
pub mod mix;
pub mod report;
pub mod rng;
pub mod schema;
pub mod template;

pub use genparse::{ParsedPrediction, Prediction, NO_MATCH};
pub use metrics::{Chunk, ChunkMode, PrfResult};
pub use mix::{MixSpec, MixStats, Quota};
pub use report::{EvalReport, ReportRow};
pub use rng::SeededRng;
pub use schema::{
    CanonicalExample, DatasetManifest, DocExample, InstructionRecord, LabelScheme, NerExample,
    NliExample, NliLabel, QaExample, ReExample, RecordMeta, Split, TaskKind,
};
pub use template::{Template, TemplatePool};
