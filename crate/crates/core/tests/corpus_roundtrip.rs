use aes_core::corpus::{
    parse_corpus, validate_gold, write_corpus, CorpusFormat, Essay, TraitScoreVector,
};
use aes_core::rubric::Trait;
use proptest::prelude::*;

fn gold() -> impl Strategy<Value = Option<TraitScoreVector>> {
    let scores: Vec<_> = Trait::ALL
        .iter()
        .map(|t| t.min_score()..=t.max_score())
        .collect();
    prop::option::weighted(
        0.8,
        scores.prop_map(|v| TraitScoreVector::from_scores(v.try_into().expect("seven traits"))),
    )
}

fn essays() -> impl Strategy<Value = Vec<Essay>> {
    prop::collection::vec(
        (
            "[A-Za-z0-9_-]{1,6}",
            "[^\u{0}]{0,40}",
            "[a-zا-ي](\\PC|[,\"\n ]){0,80}",
            gold(),
        ),
        0..12,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (id, prompt_id, text, gold))| Essay {
                id: format!("{id}-{i}"),
                prompt_id,
                text,
                gold,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csv_round_trip(input in essays()) {
        let mut buf = Vec::new();
        write_corpus(&input, CorpusFormat::Csv, &mut buf).unwrap();
        let back = parse_corpus(std::str::from_utf8(&buf).unwrap(), CorpusFormat::Csv).unwrap();
        prop_assert_eq!(back, input);
    }

    #[test]
    fn jsonl_round_trip(input in essays()) {
        let mut buf = Vec::new();
        write_corpus(&input, CorpusFormat::Jsonl, &mut buf).unwrap();
        let back = parse_corpus(std::str::from_utf8(&buf).unwrap(), CorpusFormat::Jsonl).unwrap();
        prop_assert_eq!(back, input);
    }

    #[test]
    fn consistent_vectors_validate(g in gold()) {
        if let Some(v) = g {
            prop_assert!(validate_gold(&v).is_ok());
            prop_assert_eq!(u32::from(v.total), v.sum());
        }
    }
}

#[test]
fn fixture_formats_agree() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let csv = aes_core::corpus::load_corpus(&dir.join("corpus.csv"), CorpusFormat::Csv).unwrap();
    let jsonl =
        aes_core::corpus::load_corpus(&dir.join("corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    assert_eq!(csv.len(), 20);
    assert_eq!(csv, jsonl);
}
