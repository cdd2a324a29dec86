mod common;

use std::collections::BTreeMap;

use aes_core::aggregation::{aggregate_rubric, MissingRaterPolicy, RaterAssessment};
use aes_core::parser::ParseStatus;
use aes_core::rubric::{RaterId, RubricMapping, Trait};
use proptest::prelude::*;

fn assessments(
    t: Trait,
    scores: &[(RaterId, Option<u8>)],
    mapping: &RubricMapping,
) -> Vec<RaterAssessment> {
    scores
        .iter()
        .map(|&(r, s)| {
            let map: BTreeMap<Trait, u8> = s.map(|s| (t, s)).into_iter().collect();
            let status = if s.is_some() {
                ParseStatus::Parsed
            } else {
                ParseStatus::Failed
            };
            RaterAssessment::new(r, map, status, mapping).unwrap()
        })
        .collect()
}

/// A trait plus one optional score per assigned rater.
fn rater_scores() -> impl Strategy<Value = (Trait, Vec<(RaterId, Option<u8>)>)> {
    prop::sample::select(Trait::ALL.to_vec()).prop_flat_map(|t| {
        let raters = RubricMapping::default().raters_for(t).to_vec();
        let k = raters.len();
        (
            Just(t),
            prop::collection::vec(
                prop::option::weighted(0.85, t.min_score()..=t.max_score()),
                k,
            )
            .prop_map(move |s| raters.iter().copied().zip(s).collect::<Vec<_>>()),
        )
    })
}

fn policy() -> impl Strategy<Value = MissingRaterPolicy> {
    prop::sample::select(vec![MissingRaterPolicy::Zero, MissingRaterPolicy::Drop])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unanimity(t in prop::sample::select(Trait::ALL.to_vec()), s in 0u8..=5, policy in policy()) {
        let m = RubricMapping::default();
        let s = s.min(t.max_score());
        let all: Vec<_> = m.raters_for(t).iter().map(|&r| (r, Some(s))).collect();
        let agg = aggregate_rubric(t, &assessments(t, &all, &m), &m, policy).unwrap();
        prop_assert_eq!(agg.final_score, s);
        prop_assert_eq!(agg.raw_mean, f64::from(s));
    }

    #[test]
    fn matches_float_rounding_oracle((t, scores) in rater_scores(), policy in policy()) {
        let m = RubricMapping::default();
        let agg = aggregate_rubric(t, &assessments(t, &scores, &m), &m, policy).unwrap();
        let counted: Vec<u8> = scores
            .iter()
            .filter_map(|(_, s)| match (s, policy) {
                (Some(v), _) => Some(*v),
                (None, MissingRaterPolicy::Zero) => Some(0),
                (None, MissingRaterPolicy::Drop) => None,
            })
            .collect();
        let expected = if counted.is_empty() {
            0
        } else {
            let mean = counted.iter().map(|&v| f64::from(v)).sum::<f64>() / counted.len() as f64;
            mean.round() as u8
        };
        prop_assert_eq!(agg.final_score, expected);
        prop_assert!(agg.final_score <= t.max_score());
        let missing = scores.iter().filter(|(_, s)| s.is_none()).count();
        prop_assert_eq!(agg.substituted_zero_count, missing);
    }

    #[test]
    fn monotone_in_each_rater((t, scores) in rater_scores(), which in any::<prop::sample::Index>(), policy in policy()) {
        let m = RubricMapping::default();
        let i = which.index(scores.len());
        let before = aggregate_rubric(t, &assessments(t, &scores, &m), &m, policy).unwrap();
        let mut raised = scores.clone();
        raised[i].1 = Some(match raised[i].1 {
            Some(v) => (v + 1).min(t.max_score()),
            None => t.max_score(),
        });
        // a rater that was missing under Drop now counts, so only Zero is monotone there
        if scores[i].1.is_some() || policy == MissingRaterPolicy::Zero {
            let after = aggregate_rubric(t, &assessments(t, &raised, &m), &m, policy).unwrap();
            prop_assert!(after.final_score >= before.final_score);
            prop_assert!(after.raw_mean >= before.raw_mean);
        }
    }

    #[test]
    fn permutation_invariant((t, scores) in rater_scores(), perm in Just((0..3).collect::<Vec<usize>>()).prop_shuffle(), policy in policy()) {
        let m = RubricMapping::default();
        let base = aggregate_rubric(t, &assessments(t, &scores, &m), &m, policy).unwrap();
        let order: Vec<usize> = perm.into_iter().filter(|&i| i < scores.len()).collect();
        let shuffled: Vec<_> = order.iter().map(|&i| scores[i]).collect();
        let again = aggregate_rubric(t, &assessments(t, &shuffled, &m), &m, policy).unwrap();
        prop_assert_eq!(base, again);
    }
}

#[test]
fn thirteen_thirds_rounds_to_four() {
    let m = RubricMapping::default();
    let t = Trait::Organization;
    let scores = [
        (RaterId::A, Some(5)),
        (RaterId::D, Some(4)),
        (RaterId::C, Some(4)),
    ];
    let agg = aggregate_rubric(
        t,
        &assessments(t, &scores, &m),
        &m,
        MissingRaterPolicy::Zero,
    )
    .unwrap();
    assert_eq!(agg.final_score, 4);
    assert!((agg.raw_mean - 13.0 / 3.0).abs() < 1e-12);
}

#[test]
fn mapping_is_its_own_inverse() {
    let m = RubricMapping::default();
    for t in Trait::ALL {
        for r in RaterId::ALL {
            assert_eq!(
                m.raters_for(t).contains(&r),
                m.rubrics_for(r).contains(&t),
                "{r} {t}"
            );
        }
    }
}
