mod common;

use std::collections::BTreeMap;

use aes_core::aggregation::{assemble_level, LevelInputs, MissingRaterPolicy, RaterAssessment};
use aes_core::corpus::TraitScoreVector;
use aes_core::parser::{parse_level1, parse_level2, parse_level3, ParseStatus, ParsedScores};
use aes_core::prompt::{Level, Subject};
use aes_core::rubric::{RaterId, RubricMapping, Trait};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Case {
    name: String,
    subject: String,
    raw: String,
    status: ParseStatus,
    scores: BTreeMap<Trait, u8>,
    total: Option<i64>,
}

fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(common::fixtures().join("parser_cases.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn parse(case: &Case) -> ParsedScores {
    let mapping = RubricMapping::default();
    match case.subject.parse::<Subject>().unwrap() {
        Subject::All => parse_level1(&case.raw),
        Subject::Rater(r) => parse_level2(&case.raw, r, &mapping),
        Subject::Trait(t) => parse_level3(&case.raw, t),
    }
}

#[test]
fn curated_outputs_parse_as_expected() {
    let cases = cases();
    assert!(cases.len() >= 20);
    let mut wrong = Vec::new();
    for case in &cases {
        let got = parse(case);
        if got.status != case.status
            || got.scores != case.scores
            || got.model_reported_total != case.total
        {
            wrong.push(format!("{}: {got:?}", case.name));
        }
        if got.status != ParseStatus::Parsed {
            assert!(got.failure_reason.is_some(), "{} has no reason", case.name);
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn garbage_becomes_zero_rows() {
    let mapping = RubricMapping::default();
    let garbage = "I'm sorry, but I cannot evaluate this essay.";
    let l3 = LevelInputs::RubricFewShot(
        Trait::ALL
            .iter()
            .map(|&t| (t, parse_level3(garbage, t)))
            .collect(),
    );
    let l1 = LevelInputs::Holistic(parse_level1(garbage));
    let l2 = LevelInputs::Hybrid(
        RaterId::ALL
            .iter()
            .map(|&r| {
                RaterAssessment::from_parsed(r, &parse_level2(garbage, r, &mapping), &mapping)
            })
            .collect(),
    );
    for (level, inputs) in [
        (Level::RubricFewShot, l3),
        (Level::Holistic, l1),
        (Level::Hybrid, l2),
    ] {
        let a = assemble_level(level, &inputs, &mapping, MissingRaterPolicy::Zero).unwrap();
        assert_eq!(a.vector, TraitScoreVector::zeros(), "{level}");
        assert_eq!(a.flagged_traits().len(), 7);
    }
}

fn full_vector() -> impl Strategy<Value = BTreeMap<Trait, u8>> {
    let per: Vec<_> = Trait::ALL.iter().map(|&t| common::trait_score(t)).collect();
    per.prop_map(|v| Trait::ALL.iter().copied().zip(v).collect())
}

fn render(scores: &BTreeMap<Trait, u8>, total: Option<i64>) -> String {
    let mut obj = serde_json::Map::new();
    for (t, s) in scores {
        obj.insert(t.key().to_string(), (*s).into());
    }
    if let Some(total) = total {
        obj.insert("total".into(), total.into());
    }
    serde_json::Value::Object(obj).to_string()
}

proptest! {
    #[test]
    fn holistic_parse_is_idempotent(scores in full_vector()) {
        let total = scores.values().map(|&s| i64::from(s)).sum();
        let first = parse_level1(&render(&scores, Some(total)));
        prop_assert_eq!(first.status, ParseStatus::Parsed);
        prop_assert_eq!(&first.scores, &scores);
        let second = parse_level1(&render(&first.scores, first.model_reported_total));
        prop_assert_eq!(first, second);
    }

    #[test]
    fn rater_parse_is_idempotent(scores in full_vector(), r in prop::sample::select(RaterId::ALL.to_vec())) {
        let mapping = RubricMapping::default();
        let first = parse_level2(&render(&scores, None), r, &mapping);
        prop_assert_eq!(first.status, ParseStatus::Parsed);
        prop_assert_eq!(first.scores.keys().copied().collect::<Vec<_>>(), mapping.rubrics_for(r));
        let second = parse_level2(&render(&first.scores, None), r, &mapping);
        prop_assert_eq!(first, second);
    }

    #[test]
    fn digits_and_fences_do_not_matter(scores in full_vector()) {
        let plain = render(&scores, None);
        let arabic: String = plain
            .chars()
            .map(|c| c.to_digit(10).map_or(c, |d| char::from_u32(0x0660 + d).unwrap()))
            .collect();
        let fenced = format!("Sure.\n```json\n{arabic}\n```\nDone.");
        prop_assert_eq!(parse_level1(&plain), parse_level1(&fenced));
    }
}
