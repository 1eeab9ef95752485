//! Quota sampling, seeded shuffling and content digests for training mixes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::schema::{InstructionRecord, Split, TaskKind};

/// How many records to take from a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuotaRepr", into = "QuotaRepr")]
pub enum Quota {
    All,
    Count(u64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QuotaRepr {
    Count(u64),
    Keyword(String),
}

impl TryFrom<QuotaRepr> for Quota {
    type Error = String;

    fn try_from(r: QuotaRepr) -> Result<Self, String> {
        match r {
            QuotaRepr::Count(0) => Err("quota must be positive".into()),
            QuotaRepr::Count(n) => Ok(Quota::Count(n)),
            QuotaRepr::Keyword(k) if k == "ALL" => Ok(Quota::All),
            QuotaRepr::Keyword(k) => Err(format!(
                "quota must be a positive integer or \"ALL\", got `{k}`"
            )),
        }
    }
}

impl From<Quota> for QuotaRepr {
    fn from(q: Quota) -> Self {
        match q {
            Quota::All => QuotaRepr::Keyword("ALL".into()),
            Quota::Count(n) => QuotaRepr::Count(n),
        }
    }
}

impl fmt::Display for Quota {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quota::All => f.write_str("ALL"),
            Quota::Count(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixEntry {
    pub source: String,
    pub quota: Quota,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSpec {
    pub name: String,
    pub seed: u64,
    pub entries: Vec<MixEntry>,
}

/// A positive rational factor applied to every counted quota.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub num: u64,
    pub den: u64,
}

impl Scale {
    pub const ONE: Scale = Scale { num: 1, den: 1 };

    /// Accepts `a/b`, an integer, or a decimal such as `0.01`.
    pub fn parse(s: &str) -> Option<Scale> {
        let s = s.trim();
        let scale = if let Some((a, b)) = s.split_once('/') {
            Scale {
                num: a.trim().parse().ok()?,
                den: b.trim().parse().ok()?,
            }
        } else if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let den = 10u64.pow(frac.len() as u32);
            let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
            Scale {
                num: int.checked_mul(den)?.checked_add(frac.parse().ok()?)?,
                den,
            }
        } else {
            Scale {
                num: s.parse().ok()?,
                den: 1,
            }
        };
        (scale.num > 0 && scale.den > 0).then_some(scale)
    }

    /// `round(n * num / den)`, at least 1.
    pub fn apply(self, n: u64) -> u64 {
        let scaled = (n as u128 * self.num as u128 * 2 + self.den as u128) / (2 * self.den as u128);
        scaled.clamp(1, u64::MAX as u128) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MixError {
    #[error("mix spec has no entries")]
    Empty,
    #[error("source `{0}` appears more than once in the mix spec")]
    DuplicateSource(String),
    #[error("source `{0}` is missing")]
    MissingSource(String),
    #[error("source `{name}`: quota {quota} exceeds its {available} records")]
    QuotaExceeds {
        name: String,
        quota: u64,
        available: usize,
    },
    #[error(
        "source `{name}`: record `{id}` is from the {split} split; only train records are mixed"
    )]
    NonTrainRecord {
        name: String,
        id: String,
        split: Split,
    },
}

impl MixSpec {
    pub fn validate(&self) -> Result<(), MixError> {
        if self.entries.is_empty() {
            return Err(MixError::Empty);
        }
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|p| p.source == e.source) {
                return Err(MixError::DuplicateSource(e.source.clone()));
            }
        }
        Ok(())
    }

    /// Copy with every counted quota scaled; `ALL` stays `ALL`.
    pub fn scaled(&self, scale: Scale) -> MixSpec {
        let mut out = self.clone();
        for e in &mut out.entries {
            if let Quota::Count(n) = e.quota {
                e.quota = Quota::Count(scale.apply(n));
            }
        }
        out
    }
}

/// Uniform sample without replacement, returned in original order.
pub fn sample_source<T: Clone>(
    source: &str,
    records: &[T],
    quota: Quota,
    rng: &mut SeededRng,
) -> Result<Vec<T>, MixError> {
    let k = match quota {
        Quota::All => return Ok(records.to_vec()),
        Quota::Count(k) => k,
    };
    if k > records.len() as u64 {
        return Err(MixError::QuotaExceeds {
            name: source.to_string(),
            quota: k,
            available: records.len(),
        });
    }
    let k = k as usize;
    let mut idx: Vec<usize> = (0..records.len()).collect();
    // Partial Fisher–Yates: the first k slots become a uniform k-subset.
    for i in 0..k {
        let j = i + rng.below_usize(idx.len() - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| records[i].clone()).collect())
}

/// Samples every source, concatenates in spec order and shuffles.
pub fn build_mix(
    spec: &MixSpec,
    sources: &BTreeMap<String, Vec<InstructionRecord>>,
) -> Result<Vec<InstructionRecord>, MixError> {
    spec.validate()?;
    let mut out = Vec::new();
    for entry in &spec.entries {
        let records = sources
            .get(&entry.source)
            .ok_or_else(|| MixError::MissingSource(entry.source.clone()))?;
        if let Some(r) = records.iter().find(|r| r.meta.split != Split::Train) {
            return Err(MixError::NonTrainRecord {
                name: entry.source.clone(),
                id: r.meta.source_id.clone(),
                split: r.meta.split,
            });
        }
        let mut rng = SeededRng::derive(spec.seed, &format!("sample:{}", entry.source));
        out.extend(sample_source(
            &entry.source,
            records,
            entry.quota,
            &mut rng,
        )?);
    }
    SeededRng::derive(spec.seed, "shuffle").shuffle(&mut out);
    Ok(out)
}

/// Canonical JSONL: one object per line, fields in declaration order.
pub fn to_jsonl(records: &[InstructionRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records always serialize"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct JsonlError {
    pub line: usize,
    pub message: String,
}

/// Inverse of [`to_jsonl`]. Blank lines are skipped.
pub fn from_jsonl(contents: &str) -> Result<Vec<InstructionRecord>, JsonlError> {
    contents
        .split('\n')
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JsonlError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixStats {
    pub per_source: BTreeMap<String, u64>,
    pub per_task: BTreeMap<TaskKind, u64>,
    pub total: u64,
    /// SHA-256 hex of the canonical JSONL serialization.
    pub digest: String,
}

pub fn compute_stats(records: &[InstructionRecord]) -> MixStats {
    let mut per_source = BTreeMap::new();
    let mut per_task: BTreeMap<TaskKind, u64> = TaskKind::ALL.iter().map(|&k| (k, 0)).collect();
    for r in records {
        *per_source.entry(r.meta.source_dataset.clone()).or_insert(0) += 1;
        *per_task.entry(r.meta.task_kind).or_insert(0) += 1;
    }
    MixStats {
        per_source,
        per_task,
        total: records.len() as u64,
        digest: sha256_hex(to_jsonl(records).as_bytes()),
    }
}

/// Fine-tuning hyperparameters bundled with the mix they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub mix_name: String,
    pub mix_digest: String,
    pub total_records: u64,
    pub per_device_train_batch_size: u32,
    pub learning_rate: f64,
    pub warmup_steps: u32,
    pub lr_scheduler: String,
    pub epochs: u32,
}

pub fn emit_training_recipe(mix_name: &str, stats: &MixStats) -> TrainingRecipe {
    TrainingRecipe {
        mix_name: mix_name.to_string(),
        mix_digest: stats.digest.clone(),
        total_records: stats.total,
        per_device_train_batch_size: 4,
        learning_rate: 1e-5,
        warmup_steps: 500,
        lr_scheduler: "linear".into(),
        epochs: 3,
    }
}

/// Shipped mix specs by name.
pub const BUNDLED_SPECS: &[(&str, &str)] = &[
    ("main", include_str!("../mixes/main.json")),
    (
        "ablation-expanded",
        include_str!("../mixes/ablation-expanded.json"),
    ),
];

pub fn bundled_spec(name: &str) -> Option<MixSpec> {
    BUNDLED_SPECS
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, js)| serde_json::from_str(js).ok())
}
