//! The seven scored traits, the five specialist raters and the
//! rubric-to-rater assignment used by the hybrid (level 2) prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scored rubric dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Organization,
    Vocabulary,
    Style,
    Development,
    Mechanics,
    Structure,
    Relevance,
}

impl Trait {
    /// Canonical order, used for score vectors and report rows.
    pub const ALL: [Trait; 7] = [
        Trait::Organization,
        Trait::Vocabulary,
        Trait::Style,
        Trait::Development,
        Trait::Mechanics,
        Trait::Structure,
        Trait::Relevance,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Trait::Organization => "organization",
            Trait::Vocabulary => "vocabulary",
            Trait::Style => "style",
            Trait::Development => "development",
            Trait::Mechanics => "mechanics",
            Trait::Structure => "structure",
            Trait::Relevance => "relevance",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Trait::Organization => "Organization",
            Trait::Vocabulary => "Vocabulary",
            Trait::Style => "Style",
            Trait::Development => "Development",
            Trait::Mechanics => "Mechanics",
            Trait::Structure => "Structure",
            Trait::Relevance => "Relevance",
        }
    }

    pub fn min_score(self) -> u8 {
        0
    }

    pub fn max_score(self) -> u8 {
        match self {
            Trait::Relevance => 2,
            _ => 5,
        }
    }

    pub fn in_range(self, score: i64) -> bool {
        score >= i64::from(self.min_score()) && score <= i64::from(self.max_score())
    }

    /// Index into [`Trait::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Inclusive score range of a trait.
pub fn trait_range(t: Trait) -> (u8, u8) {
    (t.min_score(), t.max_score())
}

/// Maximum achievable total over all seven traits.
pub const MAX_TOTAL: u8 = 32;

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Trait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.trim().to_lowercase();
        Trait::ALL
            .into_iter()
            .find(|t| t.key() == lowered)
            .ok_or_else(|| Error::UnknownTrait(s.to_string()))
    }
}

/// Specialist rater identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RaterId {
    A,
    B,
    C,
    D,
    E,
}

impl RaterId {
    pub const ALL: [RaterId; 5] = [RaterId::A, RaterId::B, RaterId::C, RaterId::D, RaterId::E];

    pub fn as_str(self) -> &'static str {
        match self {
            RaterId::A => "A",
            RaterId::B => "B",
            RaterId::C => "C",
            RaterId::D => "D",
            RaterId::E => "E",
        }
    }

    pub fn spec(self) -> &'static RaterSpec {
        &RATERS[self as usize]
    }
}

impl fmt::Display for RaterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RaterId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(RaterId::A),
            "B" | "b" => Ok(RaterId::B),
            "C" | "c" => Ok(RaterId::C),
            "D" | "d" => Ok(RaterId::D),
            "E" | "e" => Ok(RaterId::E),
            other => Err(Error::UnknownRater(other.to_string())),
        }
    }
}

/// A simulated specialist evaluator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaterSpec {
    pub id: RaterId,
    pub specialization: &'static str,
    pub focus: &'static str,
}

pub static RATERS: [RaterSpec; 5] = [
    RaterSpec {
        id: RaterId::A,
        specialization: "Organization & Coherence",
        focus: "Logical flow, paragraph transitions, structural clarity",
    },
    RaterSpec {
        id: RaterId::B,
        specialization: "Vocabulary & Lexical Variety",
        focus: "Word choice, lexical diversity, sophistication, repetition",
    },
    RaterSpec {
        id: RaterId::C,
        specialization: "Grammar, Spelling & Mechanics",
        focus: "Punctuation, syntax, spelling, readability",
    },
    RaterSpec {
        id: RaterId::D,
        specialization: "Content Development & Reasoning",
        focus: "Argument quality, elaboration, evidence use",
    },
    RaterSpec {
        id: RaterId::E,
        specialization: "Style, Tone & Contextual Appropriateness",
        focus: "Voice, stylistic consistency, audience alignment",
    },
];

/// Assignment of rater sets to traits. Rater order within a set is kept for
/// prompt display only; aggregation is order-invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RubricMapping {
    assignment: [Vec<RaterId>; 7],
}

impl Default for RubricMapping {
    fn default() -> Self {
        use RaterId::*;
        Self {
            assignment: [
                vec![A, D, C], // Organization
                vec![B, E, C], // Vocabulary
                vec![B, E, C], // Style
                vec![D, A, B], // Development
                vec![C],       // Mechanics
                vec![A, B, C], // Structure
                vec![D, B, E], // Relevance
            ],
        }
    }
}

#[derive(Debug, Deserialize)]
struct MappingFile {
    mapping: BTreeMap<String, Vec<String>>,
}

impl RubricMapping {
    /// Builds a mapping and checks every invariant, reporting all violations.
    pub fn new(assignment: [Vec<RaterId>; 7]) -> Result<Self> {
        let mapping = Self { assignment };
        let violations = mapping.violations();
        if violations.is_empty() {
            Ok(mapping)
        } else {
            Err(Error::InvalidMapping(violations))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in Trait::ALL {
            let set = &self.assignment[t.index()];
            if set.is_empty() {
                out.push(format!("{t} has no assigned raters"));
            }
            for (i, r) in set.iter().enumerate() {
                if set[..i].contains(r) {
                    out.push(format!("{t} lists rater {r} more than once"));
                }
            }
        }
        if self.assignment[Trait::Mechanics.index()].len() != 1 {
            out.push("Mechanics must map to exactly one rater".to_string());
        }
        for r in RaterId::ALL {
            if !self.assignment.iter().any(|set| set.contains(&r)) {
                out.push(format!("rater {r} is not assigned to any trait"));
            }
        }
        out
    }

    /// Parses an override of the form
    ///
    /// ```toml
    /// [mapping]
    /// organization = ["A", "D", "C"]
    /// ```
    ///
    /// All seven traits must be listed.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: MappingFile =
            toml::from_str(s).map_err(|e| Error::InvalidMapping(vec![e.to_string()]))?;
        let mut assignment: [Option<Vec<RaterId>>; 7] = Default::default();
        let mut problems = Vec::new();
        for (name, ids) in &file.mapping {
            let t = match name.parse::<Trait>() {
                Ok(t) => t,
                Err(e) => {
                    problems.push(e.to_string());
                    continue;
                }
            };
            let mut raters = Vec::with_capacity(ids.len());
            for id in ids {
                match id.parse::<RaterId>() {
                    Ok(r) => raters.push(r),
                    Err(e) => problems.push(format!("{t}: {e}")),
                }
            }
            assignment[t.index()] = Some(raters);
        }
        for t in Trait::ALL {
            if assignment[t.index()].is_none() {
                problems.push(format!("missing trait {t}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidMapping(problems));
        }
        Self::new(assignment.map(|a| a.unwrap_or_default()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The rater set for a trait, in display order.
    pub fn raters_for(&self, t: Trait) -> &[RaterId] {
        &self.assignment[t.index()]
    }

    /// Traits a rater contributes to, in canonical trait order.
    pub fn rubrics_for(&self, rater: RaterId) -> Vec<Trait> {
        Trait::ALL
            .into_iter()
            .filter(|t| self.assignment[t.index()].contains(&rater))
            .collect()
    }
}
