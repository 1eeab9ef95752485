use medinstruct_core::ingest::{
    decode_utf8, insert_concept_tags, parse_conll, parse_doc, parse_nli, parse_qa, parse_re_file,
    serialize_conll, ConceptSpan, SourceInfo,
};
use medinstruct_core::schema::{concept_tags, LabelScheme, NerExample, NliFields, Split, TaskKind};
use proptest::prelude::*;

fn scheme() -> LabelScheme {
    LabelScheme::bio("ds", TaskKind::Ner, vec!["Gene".into(), "Protein".into()]).unwrap()
}

fn source() -> SourceInfo {
    SourceInfo::new("ds", Split::Train)
}

fn sentences() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    let labels = scheme().labels;
    prop::collection::vec(
        (1usize..10).prop_flat_map(move |n| {
            (
                prop::collection::vec("[^\\s]{1,8}", n),
                prop::collection::vec(prop::sample::select(labels.clone()), n),
            )
        }),
        0..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conll_round_trip(sents in sentences()) {
        let examples: Vec<NerExample> = sents
            .into_iter()
            .enumerate()
            .map(|(i, (tokens, labels))| NerExample {
                id: format!("ds/train/{i:06}"),
                source_dataset: "ds".into(),
                split: Split::Train,
                tokens,
                labels,
            })
            .collect();
        let text = serialize_conll(&examples);
        prop_assert_eq!(parse_conll(&text, &scheme(), &source()).unwrap(), examples.clone());
        let crlf = text.replace('\n', "\r\n");
        prop_assert_eq!(parse_conll(&crlf, &scheme(), &source()).unwrap(), examples);
    }

    #[test]
    fn parsers_total_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let Ok(text) = decode_utf8(&bytes) else { return Ok(()); };
        let _ = parse_conll(text, &scheme(), &source());
        let flat = LabelScheme::flat("gad", TaskKind::Re, vec!["0".into(), "1".into()]).unwrap();
        let _ = parse_re_file(text, &flat, &source());
        let _ = parse_nli(text, &NliFields::default(), &source());
        let _ = parse_doc(text, &flat, &source());
        let _ = parse_qa(text, &source());
    }

    #[test]
    fn tagging_length_law(
        words in prop::collection::vec("[a-zA-Z]{1,7}", 2..12),
        picks in prop::collection::btree_set(0usize..12, 0..4),
        concept in "[a-z_]{1,8}",
    ) {
        let text = words.join(" ");
        let mut offsets = Vec::new();
        let mut pos = 0;
        for w in &words {
            offsets.push((pos, pos + w.len()));
            pos += w.len() + 1;
        }
        let spans: Vec<ConceptSpan> = picks
            .iter()
            .filter(|&&i| i < words.len())
            .map(|&i| ConceptSpan::new(offsets[i].0, offsets[i].1, concept.clone()))
            .collect();
        let tagged = insert_concept_tags(&text, &spans).unwrap();
        let expected_len = spans.iter().fold(text.len() as isize, |acc, s| {
            acc - (s.end - s.start) as isize + s.tag().len() as isize
        });
        prop_assert_eq!(tagged.len() as isize, expected_len);
        prop_assert_eq!(concept_tags(&tagged).len(), spans.len());
    }
}

#[test]
fn decode_reports_line_of_bad_bytes() {
    let err = decode_utf8(b"a\tO\nb\tO\n\xff\tO\n").unwrap_err();
    assert_eq!(err.line, 3);
}

#[test]
fn overlapping_spans_rejected() {
    let spans = [
        ConceptSpan::new(0, 4, "gene"),
        ConceptSpan::new(2, 6, "gene"),
    ];
    assert!(insert_concept_tags("abcdefgh", &spans).is_err());
}
