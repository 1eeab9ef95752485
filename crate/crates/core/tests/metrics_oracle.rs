//! Entity PRF checked against a brute-force chunk enumerator.
//!
//! The oracle never runs the chunker's state machine. It tests every
//! `(type, start, end)` triple against local label predicates: a valid start
//! label, `I-type` on every following position, and no `I-type` right after
//! the end.

use std::collections::BTreeSet;

use medinstruct_core::metrics::{entity_prf, extract_chunks, Chunk, ChunkMode};
use proptest::prelude::*;

fn label(prefix: &str, ty: &str) -> String {
    if ty.is_empty() {
        prefix.to_string()
    } else {
        format!("{prefix}-{ty}")
    }
}

fn oracle_chunks(labels: &[String], types: &[&str], mode: ChunkMode) -> BTreeSet<Chunk> {
    let n = labels.len();
    let mut out = BTreeSet::new();
    for &ty in types {
        let b = label("B", ty);
        let i = label("I", ty);
        for start in 0..n {
            let starts = labels[start] == b
                || (mode == ChunkMode::Lenient
                    && labels[start] == i
                    && (start == 0 || (labels[start - 1] != b && labels[start - 1] != i)));
            if !starts {
                continue;
            }
            for end in start..n {
                let body = labels[start + 1..=end].iter().all(|l| *l == i);
                let maximal = end + 1 == n || labels[end + 1] != i;
                if body && maximal {
                    out.insert(Chunk::new(ty, start, end));
                }
            }
        }
    }
    out
}

fn oracle_counts(
    gold: &[Vec<String>],
    pred: &[Vec<String>],
    types: &[&str],
    mode: ChunkMode,
) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gc = oracle_chunks(g, types, mode);
        let pc = oracle_chunks(p, types, mode);
        let hit = gc.intersection(&pc).count() as u64;
        tp += hit;
        fp += pc.len() as u64 - hit;
        fn_ += gc.len() as u64 - hit;
    }
    (tp, fp, fn_)
}

const TYPE_SETS: [&[&str]; 4] = [&[""], &["X"], &["X", "Y"], &["X", "Y", "Z"]];

fn alphabet(types: &[&str]) -> Vec<String> {
    let mut v = vec!["O".to_string()];
    for t in types {
        v.push(label("B", t));
        v.push(label("I", t));
    }
    v
}

prop_compose! {
    fn corpus()(ts in 0..TYPE_SETS.len(), len in 1usize..=12, pairs in 1usize..4)
        (ts in Just(ts),
         gold in prop::collection::vec(prop::collection::vec(0usize..7, len), pairs),
         pred in prop::collection::vec(prop::collection::vec(0usize..7, len), pairs))
        -> (usize, Vec<Vec<String>>, Vec<Vec<String>>)
    {
        let alpha = alphabet(TYPE_SETS[ts]);
        let map = |seqs: Vec<Vec<usize>>| -> Vec<Vec<String>> {
            seqs.into_iter()
                .map(|s| s.into_iter().map(|i| alpha[i % alpha.len()].clone()).collect())
                .collect()
        };
        (ts, map(gold), map(pred))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chunks_match_oracle((ts, gold, _pred) in corpus()) {
        for mode in [ChunkMode::Lenient, ChunkMode::Strict] {
            for seq in &gold {
                prop_assert_eq!(extract_chunks(seq, mode), oracle_chunks(seq, TYPE_SETS[ts], mode));
            }
        }
    }

    #[test]
    fn prf_matches_oracle((ts, gold, pred) in corpus()) {
        for mode in [ChunkMode::Lenient, ChunkMode::Strict] {
            let r = entity_prf(&gold, &pred, mode).unwrap();
            prop_assert_eq!((r.tp, r.fp, r.fn_), oracle_counts(&gold, &pred, TYPE_SETS[ts], mode));
        }
    }

    #[test]
    fn swapping_swaps_precision_and_recall((_ts, gold, pred) in corpus()) {
        let a = entity_prf(&gold, &pred, ChunkMode::Lenient).unwrap();
        let b = entity_prf(&pred, &gold, ChunkMode::Lenient).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn bounds_and_totals((_ts, gold, pred) in corpus()) {
        for mode in [ChunkMode::Lenient, ChunkMode::Strict] {
            let r = entity_prf(&gold, &pred, mode).unwrap();
            for v in [r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let gold_total: usize = gold.iter().map(|g| extract_chunks(g, mode).len()).sum();
            let pred_total: usize = pred.iter().map(|p| extract_chunks(p, mode).len()).sum();
            prop_assert_eq!(r.tp + r.fn_, gold_total as u64);
            prop_assert_eq!(r.tp + r.fp, pred_total as u64);
        }
    }

    #[test]
    fn perfect_f1_iff_identical_chunks((_ts, gold, pred) in corpus()) {
        let r = entity_prf(&gold, &pred, ChunkMode::Lenient).unwrap();
        let same = gold.iter().zip(&pred).all(|(g, p)| {
            extract_chunks(g, ChunkMode::Lenient) == extract_chunks(p, ChunkMode::Lenient)
        });
        let any_chunk = gold.iter().any(|g| !extract_chunks(g, ChunkMode::Lenient).is_empty());
        // With no chunks at all, f1 is 0 by the 0/0 convention.
        prop_assert_eq!(r.f1 == 1.0, same && any_chunk);
    }
}

#[test]
fn worked_pair_from_oracle() {
    let gold = vec![vec!["B".to_string(), "I".into(), "O".into(), "B".into()]];
    let pred = vec![vec!["B".to_string(), "O".into(), "O".into(), "B".into()]];
    assert_eq!(
        oracle_counts(&gold, &pred, &[""], ChunkMode::Lenient),
        (1, 1, 1)
    );
    let r = entity_prf(&gold, &pred, ChunkMode::Lenient).unwrap();
    assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    assert_eq!(r.f1, 0.5);
}
