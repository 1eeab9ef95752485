//! Synthetic source corpora in each native format.
//!
//! The real corpora cannot be redistributed. These generators write files
//! with the same layout and label inventories, plus a manifest per dataset,
//! so every pipeline stage can run end to end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use medinstruct_core::ingest::{serialize_conll, ConceptSpan, SourceInfo};
use medinstruct_core::rng::SeededRng;
use medinstruct_core::schema::{
    CanonicalExample, DatasetManifest, InstructionRecord, NerExample, NliFields, NliLabel,
    SchemeSpec, SourceFormat, Split, TaskKind,
};
use medinstruct_core::template::{bundled_pool, convert_examples};
use serde_json::json;

use crate::error::Result;
use crate::io::{parse_source, write_text};

/// One shipped dataset: name, format and label inventory.
#[derive(Debug, Clone, Copy)]
pub struct DatasetDef {
    pub name: &'static str,
    pub format: SourceFormat,
    /// BIO categories for NER, flat labels otherwise.
    pub labels: &'static [&'static str],
}

const I2B2_2012: &[&str] = &[
    "PROBLEM",
    "TEST",
    "TREATMENT",
    "CLINICAL_DEPT",
    "EVIDENTIAL",
    "OCCURRENCE",
];

const I2B2_2010: &[&str] = &[
    "TrIP", "TrWP", "TrCP", "TrAP", "TrNAP", "TeRP", "TeCP", "PIP",
];

const HOC: &[&str] = &[
    "sustaining proliferative signaling",
    "evading growth suppressors",
    "resisting cell death",
    "enabling replicative immortality",
    "inducing angiogenesis",
    "activating invasion and metastasis",
    "genomic instability and mutation",
    "tumor promoting inflammation",
    "cellular energetics",
    "avoiding immune destruction",
];

pub const DATASETS: &[DatasetDef] = &[
    DatasetDef {
        name: "ncbi-disease",
        format: SourceFormat::Conll,
        labels: &[],
    },
    DatasetDef {
        name: "bc5cdr-disease",
        format: SourceFormat::Conll,
        labels: &[],
    },
    DatasetDef {
        name: "bc5cdr-chem",
        format: SourceFormat::Conll,
        labels: &[],
    },
    DatasetDef {
        name: "bc2gm",
        format: SourceFormat::Conll,
        labels: &[],
    },
    DatasetDef {
        name: "jnlpba",
        format: SourceFormat::Conll,
        labels: &[],
    },
    DatasetDef {
        name: "i2b2-2012",
        format: SourceFormat::Conll,
        labels: I2B2_2012,
    },
    DatasetDef {
        name: "i2b2-2010",
        format: SourceFormat::ReTsv,
        labels: I2B2_2010,
    },
    DatasetDef {
        name: "gad",
        format: SourceFormat::ReTsv,
        labels: &["0", "1"],
    },
    DatasetDef {
        name: "mednli",
        format: SourceFormat::NliJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "hoc",
        format: SourceFormat::DocJsonl,
        labels: HOC,
    },
    DatasetDef {
        name: "chatdoctor",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "pmc-llama",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "pubmedqa",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "medqa",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "umls-relations",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
    DatasetDef {
        name: "umls",
        format: SourceFormat::QaJsonl,
        labels: &[],
    },
];

pub fn dataset(name: &str) -> Option<&'static DatasetDef> {
    DATASETS.iter().find(|d| d.name == name)
}

impl DatasetDef {
    pub fn task_kind(&self) -> TaskKind {
        self.format.task_kind()
    }

    fn extension(&self) -> &'static str {
        match self.format {
            SourceFormat::Conll => "conll",
            SourceFormat::ReTsv => "tsv",
            _ => "jsonl",
        }
    }

    pub fn file_name(&self, split: Split) -> String {
        format!("{split}.{}", self.extension())
    }

    pub fn manifest(&self) -> DatasetManifest {
        let labels: Vec<String> = self.labels.iter().map(|s| s.to_string()).collect();
        let scheme = match self.format {
            SourceFormat::Conll => SchemeSpec {
                bio: true,
                categories: labels,
                labels: Vec::new(),
            },
            _ => SchemeSpec {
                bio: false,
                categories: Vec::new(),
                labels,
            },
        };
        DatasetManifest {
            name: self.name.to_string(),
            task_kind: self.task_kind(),
            scheme,
            format: self.format,
            files: [Split::Train, Split::Dev, Split::Test]
                .into_iter()
                .map(|s| (s, self.file_name(s)))
                .collect(),
            nli_fields: NliFields::default(),
        }
    }

    /// Native-format contents for `n` examples of one split.
    pub fn generate(&self, split: Split, n: usize, seed: u64) -> String {
        let mut rng = SeededRng::derive(seed, &format!("synth:{}:{split}", self.name));
        match self.format {
            SourceFormat::Conll => {
                let examples: Vec<NerExample> = (0..n)
                    .map(|_| ner_sentence(self.labels, &mut rng))
                    .collect();
                serialize_conll(&examples)
            }
            SourceFormat::ReTsv => (0..n)
                .map(|i| re_line(self, i, &mut rng))
                .collect::<String>(),
            SourceFormat::NliJsonl => (0..n).map(|_| nli_line(&mut rng)).collect(),
            SourceFormat::DocJsonl => (0..n).map(|_| doc_line(self.labels, &mut rng)).collect(),
            SourceFormat::QaJsonl => (0..n).map(|_| qa_line(&mut rng)).collect(),
        }
    }
}

const FILLER: &[&str] = &[
    "the",
    "patient",
    "was",
    "treated",
    "with",
    "and",
    "showed",
    "in",
    "of",
    "a",
    "study",
    "we",
    "observed",
    "increased",
    "levels",
    "after",
    "(",
    ")",
    ",",
    "-",
    "Results:",
    "no",
    "evidence",
    "mg",
    "daily",
    "cells",
    "expression",
    "p<0.05",
    "+/-",
    "were",
];

const ENTITY: &[&str] = &[
    "breast",
    "cancer",
    "aspirin",
    "BRCA1",
    "IL-2",
    "receptor",
    "diabetes",
    "mellitus",
    "cisplatin",
    "T-cell",
    "lymphoma",
    "CT",
    "scan",
    "insulin",
    "hypertension",
    "p53",
    "kinase",
    "renal",
    "failure",
    "ICU",
    "yesterday",
    "admitted",
    "MRI",
    "TNF-alpha",
];

fn pick<'a>(rng: &mut SeededRng, items: &[&'a str]) -> &'a str {
    items[rng.below_usize(items.len())]
}

fn ner_sentence(categories: &[&str], rng: &mut SeededRng) -> NerExample {
    let len = 4 + rng.below_usize(9);
    let mut tokens = Vec::with_capacity(len);
    let mut labels = Vec::with_capacity(len);
    while tokens.len() < len {
        if rng.below(3) == 0 {
            let suffix = if categories.is_empty() {
                String::new()
            } else {
                format!("-{}", pick(rng, categories))
            };
            let span = 1 + rng.below_usize(3);
            for k in 0..span.min(len - tokens.len()) {
                tokens.push(pick(rng, ENTITY).to_string());
                labels.push(format!("{}{suffix}", if k == 0 { "B" } else { "I" }));
            }
        } else {
            tokens.push(pick(rng, FILLER).to_string());
            labels.push("O".to_string());
        }
    }
    NerExample {
        id: String::new(),
        source_dataset: String::new(),
        split: Split::Train,
        tokens,
        labels,
    }
}

fn re_line(def: &DatasetDef, i: usize, rng: &mut SeededRng) -> String {
    let (a, b) = if def.name == "gad" {
        ("gene", "disease")
    } else {
        let concepts = ["problem", "test", "treatment"];
        (pick(rng, &concepts), pick(rng, &concepts))
    };
    let sentence = format!(
        "{} {} {} {} {} {} .",
        pick(rng, FILLER),
        pick(rng, ENTITY),
        pick(rng, FILLER),
        pick(rng, FILLER),
        pick(rng, ENTITY),
        pick(rng, FILLER)
    );
    // Tag the two entity words by byte offset, as a real preprocessor would.
    let words: Vec<&str> = sentence.split(' ').collect();
    let offset = |k: usize| words[..k].iter().map(|w| w.len() + 1).sum::<usize>();
    let spans = [
        ConceptSpan::new(offset(1), offset(1) + words[1].len(), a),
        ConceptSpan::new(offset(4), offset(4) + words[4].len(), b),
    ];
    let tagged = medinstruct_core::ingest::insert_concept_tags(&sentence, &spans)
        .expect("synthetic spans are valid");
    format!("r{i:05}\t{tagged}\t{}\n", pick(rng, def.labels))
}

fn nli_line(rng: &mut SeededRng) -> String {
    let label = NliLabel::ALL[rng.below_usize(3)].as_str().to_lowercase();
    let obj = json!({
        "sentence1": format!("The {} {} {} .", pick(rng, FILLER), pick(rng, ENTITY), pick(rng, FILLER)),
        "sentence2": format!("Patient has {} .", pick(rng, ENTITY)),
        "gold_label": label,
    });
    format!("{obj}\n")
}

fn doc_line(labels: &[&str], rng: &mut SeededRng) -> String {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    rng.shuffle(&mut idx);
    let k = 1 + rng.below_usize(3);
    let chosen: Vec<&str> = idx[..k].iter().map(|&i| labels[i]).collect();
    let text: Vec<&str> = (0..12)
        .map(|j| {
            if j % 3 == 0 {
                pick(rng, ENTITY)
            } else {
                pick(rng, FILLER)
            }
        })
        .collect();
    format!("{}\n", json!({ "text": text.join(" "), "labels": chosen }))
}

fn qa_line(rng: &mut SeededRng) -> String {
    let with_context = rng.below(2) == 0;
    let question = format!(
        "What is the usual treatment for {} {}?",
        pick(rng, ENTITY),
        pick(rng, ENTITY)
    );
    let answer = format!(
        "{} {} is commonly used.",
        pick(rng, ENTITY),
        pick(rng, ENTITY)
    );
    let obj = if with_context {
        json!({ "instruction": "Answer as a doctor.", "input": question, "output": answer })
    } else {
        json!({ "instruction": question, "input": "", "output": answer })
    };
    format!("{obj}\n")
}

/// Parsed examples for one synthetic split, as ingestion would produce them.
pub fn examples(def: &DatasetDef, split: Split, n: usize, seed: u64) -> Vec<CanonicalExample> {
    let manifest = def.manifest();
    let scheme = manifest.label_scheme().expect("shipped schemes are valid");
    let source = SourceInfo::new(def.name, split);
    parse_source(&manifest, &scheme, &def.generate(split, n, seed), &source)
        .expect("synthetic sources parse")
}

/// Instruction records for one synthetic split, converted with the shipped
/// template pool.
pub fn records(def: &DatasetDef, split: Split, n: usize, seed: u64) -> Vec<InstructionRecord> {
    let scheme = def
        .manifest()
        .label_scheme()
        .expect("shipped schemes are valid");
    let pool = bundled_pool(def.name).expect("every shipped dataset has a pool");
    convert_examples(&examples(def, split, n, seed), &pool, &scheme, seed)
        .expect("pool matches dataset")
}

/// Writes `<out>/<name>/manifest.json` and one file per split for each
/// dataset. Returns manifest paths by dataset name.
pub fn write_fixtures(
    out: &Path,
    defs: &[&DatasetDef],
    per_split: usize,
    seed: u64,
) -> Result<BTreeMap<String, PathBuf>> {
    let mut manifests = BTreeMap::new();
    for def in defs {
        let dir = out.join(def.name);
        for split in [Split::Train, Split::Dev, Split::Test] {
            write_text(
                &dir.join(def.file_name(split)),
                &def.generate(split, per_split, seed),
            )?;
        }
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&def.manifest()).expect("manifest serializes");
        write_text(&path, &(json + "\n"))?;
        manifests.insert(def.name.to_string(), path);
    }
    Ok(manifests)
}
