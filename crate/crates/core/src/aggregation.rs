//! Combining parsed model output into final trait score vectors.
//!
//! For the hybrid level each trait's score is the unweighted mean of its
//! assigned raters' scores, rounded half away from zero. The rounding is done
//! on the integer numerator so that `13/3` and `9/2` never depend on floating
//! point behaviour.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TraitScoreVector;
use crate::error::{Error, Result};
use crate::parser::{ParseStatus, ParsedScores};
use crate::prompt::Level;
use crate::rubric::{RaterId, RubricMapping, Trait};

/// What to do when a rater's score for a trait is missing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingRaterPolicy {
    /// Substitute the trait minimum (0) into the mean.
    #[default]
    Zero,
    /// Average over the raters that did respond.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterAssessment {
    pub rater: RaterId,
    pub scores: BTreeMap<Trait, u8>,
    pub source_status: ParseStatus,
}

impl RaterAssessment {
    pub fn new(
        rater: RaterId,
        scores: BTreeMap<Trait, u8>,
        source_status: ParseStatus,
        mapping: &RubricMapping,
    ) -> Result<Self> {
        for (&t, &s) in &scores {
            if !mapping.raters_for(t).contains(&rater) {
                return Err(Error::UnassignedRater { rater, trait_: t });
            }
            if !t.in_range(i64::from(s)) {
                return Err(Error::ScoreOutOfRange {
                    trait_: t,
                    score: i64::from(s),
                    min: t.min_score(),
                    max: t.max_score(),
                });
            }
        }
        Ok(Self {
            rater,
            scores,
            source_status,
        })
    }

    /// Keeps only the traits this rater is assigned; parse output is already
    /// restricted, so this only matters for hand-built inputs.
    pub fn from_parsed(rater: RaterId, parsed: &ParsedScores, mapping: &RubricMapping) -> Self {
        let scores = parsed
            .scores
            .iter()
            .filter(|(t, _)| mapping.raters_for(**t).contains(&rater))
            .map(|(t, s)| (*t, *s))
            .collect();
        Self {
            rater,
            scores,
            source_status: parsed.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScore {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub raw_mean: f64,
    #[serde(rename = "final")]
    pub final_score: u8,
    pub contributing_raters: Vec<RaterId>,
    pub substituted_zero_count: usize,
}

impl AggregatedScore {
    /// A directly-scored trait (levels 1 and 3): no averaging.
    pub fn direct(trait_: Trait, score: Option<u8>) -> Self {
        Self {
            trait_,
            raw_mean: f64::from(score.unwrap_or(0)),
            final_score: score.unwrap_or(0),
            contributing_raters: Vec::new(),
            substituted_zero_count: usize::from(score.is_none()),
        }
    }
}

/// `round(sum / n)` with ties away from zero, for non-negative `sum`.
fn round_half_away(sum: u64, n: u64) -> u64 {
    (2 * sum + n) / (2 * n)
}

pub fn aggregate_rubric(
    trait_: Trait,
    assessments: &[RaterAssessment],
    mapping: &RubricMapping,
    policy: MissingRaterPolicy,
) -> Result<AggregatedScore> {
    let assigned = mapping.raters_for(trait_);
    let mut seen = Vec::with_capacity(assessments.len());
    for a in assessments {
        if !assigned.contains(&a.rater) {
            return Err(Error::UnassignedRater {
                rater: a.rater,
                trait_,
            });
        }
        if seen.contains(&a.rater) {
            return Err(Error::DuplicateRater(a.rater));
        }
        seen.push(a.rater);
    }

    let mut sum: u64 = 0;
    let mut count: u64 = 0;
    let mut substituted = 0usize;
    let mut contributing = Vec::with_capacity(assigned.len());
    for &rater in assigned {
        let score = assessments
            .iter()
            .find(|a| a.rater == rater)
            .and_then(|a| a.scores.get(&trait_).copied());
        match (score, policy) {
            (Some(s), _) => {
                sum += u64::from(s);
                count += 1;
                contributing.push(rater);
            }
            (None, MissingRaterPolicy::Zero) => {
                count += 1;
                substituted += 1;
                contributing.push(rater);
            }
            (None, MissingRaterPolicy::Drop) => substituted += 1,
        }
    }

    if count == 0 {
        return Ok(AggregatedScore {
            trait_,
            raw_mean: 0.0,
            final_score: 0,
            contributing_raters: contributing,
            substituted_zero_count: substituted,
        });
    }
    let final_score = round_half_away(sum, count).min(u64::from(trait_.max_score())) as u8;
    Ok(AggregatedScore {
        trait_,
        raw_mean: sum as f64 / count as f64,
        final_score,
        contributing_raters: contributing,
        substituted_zero_count: substituted,
    })
}

/// Builds the final vector; the total is always recomputed.
pub fn finalize_vector(per_trait: &BTreeMap<Trait, AggregatedScore>) -> Result<TraitScoreVector> {
    let mut scores = [0u8; 7];
    for t in Trait::ALL {
        let agg = per_trait.get(&t).ok_or(Error::MissingTrait(t))?;
        scores[t.index()] = agg.final_score.min(t.max_score());
    }
    Ok(TraitScoreVector::from_scores(scores))
}

/// Level-appropriate parsed inputs.
#[derive(Debug, Clone)]
pub enum LevelInputs {
    Holistic(ParsedScores),
    Hybrid(Vec<RaterAssessment>),
    RubricFewShot(Vec<(Trait, ParsedScores)>),
}

impl LevelInputs {
    pub fn level(&self) -> Level {
        match self {
            LevelInputs::Holistic(_) => Level::Holistic,
            LevelInputs::Hybrid(_) => Level::Hybrid,
            LevelInputs::RubricFewShot(_) => Level::RubricFewShot,
        }
    }
}

/// One essay's assembled prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembled {
    pub vector: TraitScoreVector,
    pub per_trait: BTreeMap<Trait, AggregatedScore>,
    pub model_reported_total: Option<i64>,
}

impl Assembled {
    /// Traits whose final score involved at least one zero substitution.
    pub fn flagged_traits(&self) -> Vec<Trait> {
        self.per_trait
            .values()
            .filter(|a| a.substituted_zero_count > 0)
            .map(|a| a.trait_)
            .collect()
    }
}

pub fn assemble_level(
    level: Level,
    inputs: &LevelInputs,
    mapping: &RubricMapping,
    policy: MissingRaterPolicy,
) -> Result<Assembled> {
    let found = inputs.level();
    if found != level {
        return Err(Error::Arity {
            level: level.number(),
            expected: level.prompts_per_essay(),
            found: match inputs {
                LevelInputs::Holistic(_) => 1,
                LevelInputs::Hybrid(v) => v.len(),
                LevelInputs::RubricFewShot(v) => v.len(),
            },
        });
    }
    let mut per_trait = BTreeMap::new();
    let mut model_reported_total = None;
    match inputs {
        LevelInputs::Holistic(parsed) => {
            for t in Trait::ALL {
                per_trait.insert(t, AggregatedScore::direct(t, parsed.get(t)));
            }
            model_reported_total = parsed.model_reported_total;
        }
        LevelInputs::Hybrid(assessments) => {
            if assessments.len() != RaterId::ALL.len() {
                return Err(Error::Arity {
                    level: level.number(),
                    expected: RaterId::ALL.len(),
                    found: assessments.len(),
                });
            }
            for t in Trait::ALL {
                let relevant: Vec<RaterAssessment> = assessments
                    .iter()
                    .filter(|a| mapping.raters_for(t).contains(&a.rater))
                    .cloned()
                    .collect();
                per_trait.insert(t, aggregate_rubric(t, &relevant, mapping, policy)?);
            }
        }
        LevelInputs::RubricFewShot(items) => {
            if items.len() != Trait::ALL.len() {
                return Err(Error::Arity {
                    level: level.number(),
                    expected: Trait::ALL.len(),
                    found: items.len(),
                });
            }
            for t in Trait::ALL {
                let parsed = items
                    .iter()
                    .find(|(it, _)| *it == t)
                    .map(|(_, p)| p)
                    .ok_or(Error::MissingTrait(t))?;
                per_trait.insert(t, AggregatedScore::direct(t, parsed.get(t)));
            }
        }
    }
    let vector = finalize_vector(&per_trait)?;
    Ok(Assembled {
        vector,
        per_trait,
        model_reported_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_level3;
    use RaterId::*;

    fn assess(rater: RaterId, pairs: &[(Trait, u8)]) -> RaterAssessment {
        RaterAssessment::new(
            rater,
            pairs.iter().copied().collect(),
            ParseStatus::Parsed,
            &RubricMapping::default(),
        )
        .unwrap()
    }

    #[test]
    fn organization_examples() {
        let m = RubricMapping::default();
        let o = Trait::Organization;
        let same = [
            assess(A, &[(o, 4)]),
            assess(D, &[(o, 4)]),
            assess(C, &[(o, 4)]),
        ];
        let r = aggregate_rubric(o, &same, &m, MissingRaterPolicy::Zero).unwrap();
        assert_eq!(r.raw_mean, 4.0);
        assert_eq!(r.final_score, 4);

        let mixed = [
            assess(A, &[(o, 4)]),
            assess(D, &[(o, 4)]),
            assess(C, &[(o, 5)]),
        ];
        let r = aggregate_rubric(o, &mixed, &m, MissingRaterPolicy::Zero).unwrap();
        assert_eq!(r.raw_mean, 13.0 / 3.0);
        assert_eq!(r.final_score, 4);
    }

    #[test]
    fn mechanics_singleton() {
        let m = RubricMapping::default();
        let r = aggregate_rubric(
            Trait::Mechanics,
            &[assess(C, &[(Trait::Mechanics, 3)])],
            &m,
            MissingRaterPolicy::Zero,
        )
        .unwrap();
        assert_eq!((r.raw_mean, r.final_score), (3.0, 3));
    }

    #[test]
    fn half_rounds_away_from_zero() {
        assert_eq!(round_half_away(9, 2), 5);
        assert_eq!(round_half_away(7, 2), 4);
        assert_eq!(round_half_away(14, 3), 5);
        assert_eq!(round_half_away(13, 3), 4);
        assert_eq!(round_half_away(0, 3), 0);
    }

    #[test]
    fn unassigned_rater_rejected() {
        let m = RubricMapping::default();
        let b = RaterAssessment {
            rater: B,
            scores: BTreeMap::new(),
            source_status: ParseStatus::Parsed,
        };
        assert!(matches!(
            aggregate_rubric(Trait::Mechanics, &[b], &m, MissingRaterPolicy::Zero),
            Err(Error::UnassignedRater { rater: B, .. })
        ));
        assert!(RaterAssessment::new(
            B,
            [(Trait::Mechanics, 3)].into_iter().collect(),
            ParseStatus::Parsed,
            &m
        )
        .is_err());
    }

    #[test]
    fn missing_rater_policies() {
        let m = RubricMapping::default();
        let o = Trait::Organization;
        let two = [assess(A, &[(o, 4)]), assess(D, &[(o, 5)])];
        let zero = aggregate_rubric(o, &two, &m, MissingRaterPolicy::Zero).unwrap();
        assert_eq!(zero.raw_mean, 3.0);
        assert_eq!(zero.substituted_zero_count, 1);
        let drop = aggregate_rubric(o, &two, &m, MissingRaterPolicy::Drop).unwrap();
        assert_eq!(drop.raw_mean, 4.5);
        assert_eq!(drop.final_score, 5);
        assert_eq!(drop.contributing_raters, vec![A, D]);
    }

    #[test]
    fn finalize_recomputes_total() {
        let mk = |scores: [u8; 7]| {
            Trait::ALL
                .iter()
                .map(|&t| (t, AggregatedScore::direct(t, Some(scores[t.index()]))))
                .collect::<BTreeMap<_, _>>()
        };
        assert_eq!(
            finalize_vector(&mk([4, 4, 4, 4, 4, 4, 2])).unwrap().total,
            26
        );
        assert_eq!(finalize_vector(&mk([0; 7])).unwrap().total, 0);
        assert_eq!(
            finalize_vector(&mk([5, 5, 4, 4, 4, 4, 2])).unwrap().total,
            28
        );
        let mut partial = mk([1; 7]);
        partial.remove(&Trait::Style);
        assert!(matches!(
            finalize_vector(&partial),
            Err(Error::MissingTrait(Trait::Style))
        ));
    }

    #[test]
    fn level2_all_max() {
        let m = RubricMapping::default();
        let assessments: Vec<RaterAssessment> = RaterId::ALL
            .iter()
            .map(|&r| {
                let pairs: Vec<(Trait, u8)> = m
                    .rubrics_for(r)
                    .into_iter()
                    .map(|t| (t, t.max_score()))
                    .collect();
                assess(r, &pairs)
            })
            .collect();
        let out = assemble_level(
            Level::Hybrid,
            &LevelInputs::Hybrid(assessments),
            &m,
            MissingRaterPolicy::Zero,
        )
        .unwrap();
        assert_eq!(out.vector.scores(), [5, 5, 5, 5, 5, 5, 2]);
        assert_eq!(out.vector.total, 32);
    }

    #[test]
    fn level3_and_level1_assembly() {
        let m = RubricMapping::default();
        let scores = [4, 4, 4, 4, 4, 4, 2];
        let items = Trait::ALL
            .iter()
            .map(|&t| {
                let raw = format!(
                    "{{\"score\": {}, \"justification\": \"ok\"}}",
                    scores[t.index()]
                );
                (t, parse_level3(&raw, t))
            })
            .collect();
        let out = assemble_level(
            Level::RubricFewShot,
            &LevelInputs::RubricFewShot(items),
            &m,
            MissingRaterPolicy::Zero,
        )
        .unwrap();
        assert_eq!(out.vector.total, 26);
        assert!(out.flagged_traits().is_empty());

        let failed = assemble_level(
            Level::Holistic,
            &LevelInputs::Holistic(ParsedScores::failed("garbage")),
            &m,
            MissingRaterPolicy::Zero,
        )
        .unwrap();
        assert_eq!(failed.vector, TraitScoreVector::zeros());
        assert_eq!(failed.flagged_traits(), Trait::ALL.to_vec());
    }

    #[test]
    fn wrong_arity() {
        let m = RubricMapping::default();
        let err = assemble_level(
            Level::Hybrid,
            &LevelInputs::Hybrid(vec![assess(A, &[])]),
            &m,
            MissingRaterPolicy::Zero,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Arity {
                expected: 5,
                found: 1,
                ..
            }
        ));
        assert!(assemble_level(
            Level::Hybrid,
            &LevelInputs::Holistic(ParsedScores::failed("x")),
            &m,
            MissingRaterPolicy::Zero
        )
        .is_err());
    }
}
