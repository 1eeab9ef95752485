//! Entity-level precision/recall/F1 over BIO sequences, plus accuracy and
//! micro-F1 for flat and multi-label classification.
//!
//! Every ratio uses the 0/0 = 0 convention.

use alloc::collections::BTreeSet;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genparse::NO_MATCH;
use crate::schema::LabelScheme;

/// One entity span, `start..=end` in token indices. `entity_type` is empty
/// for the bare B/I/O scheme.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Chunk {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn new(entity_type: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            entity_type: entity_type.into(),
            start,
            end,
        }
    }
}

/// How an `I` that does not continue a same-typed chunk is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkMode {
    /// Starts a new chunk (conlleval behavior).
    #[default]
    Lenient,
    /// Treated as `O`.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Begin(&'a str),
    Inside(&'a str),
    Outside,
}

/// Splits a BIO label into prefix and type. Unknown shapes read as outside.
pub fn parse_tag(label: &str) -> Tag<'_> {
    match label {
        "B" => Tag::Begin(""),
        "I" => Tag::Inside(""),
        _ => {
            if let Some(t) = label.strip_prefix("B-") {
                Tag::Begin(t)
            } else if let Some(t) = label.strip_prefix("I-") {
                Tag::Inside(t)
            } else {
                Tag::Outside
            }
        }
    }
}

pub fn extract_chunks<L: AsRef<str>>(labels: &[L], mode: ChunkMode) -> BTreeSet<Chunk> {
    let mut out = BTreeSet::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        let tag = parse_tag(label.as_ref());
        match tag {
            Tag::Inside(t) if open.is_some_and(|(ot, _)| ot == t) => continue,
            _ => {}
        }
        if let Some((t, s)) = open.take() {
            out.insert(Chunk::new(t, s, i - 1));
        }
        open = match tag {
            Tag::Begin(t) => Some((t, i)),
            Tag::Inside(t) if mode == ChunkMode::Lenient => Some((t, i)),
            _ => None,
        };
    }
    if let Some((t, s)) = open {
        out.insert(Chunk::new(t, s, labels.len() - 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl PrfResult {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            tp,
            fp,
            fn_,
        }
    }

    /// Pools counts; associative and commutative.
    pub fn merge(&self, other: &PrfResult) -> PrfResult {
        PrfResult::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

impl Default for PrfResult {
    fn default() -> Self {
        PrfResult::from_counts(0, 0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{gold} gold items but {pred} predictions")]
    CountMismatch { gold: usize, pred: usize },
    #[error("sequence {index}: {gold} gold labels but {pred} predicted")]
    LengthMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },
    #[error("scheme `{0}` is BIO; a flat scheme is required")]
    NotFlat(String),
}

fn same_count(gold: usize, pred: usize) -> Result<(), MetricsError> {
    if gold == pred {
        Ok(())
    } else {
        Err(MetricsError::CountMismatch { gold, pred })
    }
}

/// Micro-averaged exact-match chunk PRF over a corpus of sequence pairs.
pub fn entity_prf<G: AsRef<[S]>, P: AsRef<[S]>, S: AsRef<str>>(
    gold: &[G],
    pred: &[P],
    mode: ChunkMode,
) -> Result<PrfResult, MetricsError> {
    same_count(gold.len(), pred.len())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g.len() != p.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gc = extract_chunks(g, mode);
        let pc = extract_chunks(p, mode);
        let hit = gc.intersection(&pc).count() as u64;
        tp += hit;
        fp += pc.len() as u64 - hit;
        fn_ += gc.len() as u64 - hit;
    }
    Ok(PrfResult::from_counts(tp, fp, fn_))
}

/// Fraction of positions where prediction equals gold; [`NO_MATCH`] never does.
pub fn label_accuracy<S: AsRef<str>, T: AsRef<str>>(
    golds: &[S],
    preds: &[T],
) -> Result<f64, MetricsError> {
    same_count(golds.len(), preds.len())?;
    let correct = golds
        .iter()
        .zip(preds)
        .filter(|(g, p)| p.as_ref() != NO_MATCH && g.as_ref() == p.as_ref())
        .count();
    Ok(ratio(correct as u64, golds.len() as u64))
}

/// Per-class counts summed over classes. A [`NO_MATCH`] prediction costs a
/// false negative for the gold class and no false positive.
pub fn micro_f1_labels<S: AsRef<str>, T: AsRef<str>>(
    golds: &[S],
    preds: &[T],
    scheme: &LabelScheme,
) -> Result<PrfResult, MetricsError> {
    if scheme.bio {
        return Err(MetricsError::NotFlat(scheme.name.clone()));
    }
    same_count(golds.len(), preds.len())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in golds.iter().zip(preds) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if p != NO_MATCH && g == p {
            tp += 1;
        } else {
            fn_ += 1;
            if p != NO_MATCH {
                fp += 1;
            }
        }
    }
    Ok(PrfResult::from_counts(tp, fp, fn_))
}

/// Micro PRF over set memberships.
pub fn multilabel_prf<G: AsRef<[S]>, P: AsRef<[S]>, S: AsRef<str>>(
    gold_sets: &[G],
    pred_sets: &[P],
) -> Result<PrfResult, MetricsError> {
    same_count(gold_sets.len(), pred_sets.len())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in gold_sets.iter().zip(pred_sets) {
        let g: BTreeSet<&str> = g.as_ref().iter().map(|s| s.as_ref()).collect();
        let p: BTreeSet<&str> = p.as_ref().iter().map(|s| s.as_ref()).collect();
        let hit = g.intersection(&p).count() as u64;
        tp += hit;
        fp += p.len() as u64 - hit;
        fn_ += g.len() as u64 - hit;
    }
    Ok(PrfResult::from_counts(tp, fp, fn_))
}

/// Exact match and containment for free-text answers, after trimming and
/// case folding. Experimental.
pub fn qa_match(gold: &str, pred: &str) -> (bool, bool) {
    let g = gold.trim().to_lowercase();
    let p = pred.trim().to_lowercase();
    let exact = !g.is_empty() && g == p;
    let contained = exact || (!g.is_empty() && p.contains(&g));
    (exact, contained)
}
