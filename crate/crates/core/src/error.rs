use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::prompt::Band;
use crate::rubric::{RaterId, Trait};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: field `{field}`: {message}")]
    MalformedRow {
        row: usize,
        field: String,
        message: String,
    },

    #[error("row {row}: duplicate essay id `{id}`")]
    DuplicateId { row: usize, id: String },

    #[error("unknown trait `{0}`")]
    UnknownTrait(String),

    #[error("unknown rater `{0}`")]
    UnknownRater(String),

    #[error("invalid rubric mapping: {}", .0.join("; "))]
    InvalidMapping(Vec<String>),

    #[error("template for level {expected} used where level {found} is required")]
    LevelMismatch { expected: u8, found: u8 },

    #[error("unresolved slot {{{slot}}} in level {level} template")]
    UnresolvedSlot { slot: String, level: u8 },

    #[error("level {level} template is missing required slot {{{slot}}}")]
    MissingSlot { slot: String, level: u8 },

    #[error("missing band: {0}")]
    MissingBand(Band),

    #[error("duplicate band: {0}")]
    DuplicateBand(Band),

    #[error("few-shot example for {found} supplied where {expected} is required")]
    ExampleTraitMismatch { expected: Trait, found: Trait },

    #[error("few-shot file is missing trait {0}")]
    MissingFewShotTrait(Trait),

    #[error("{trait_}: score {score} outside {min}..={max}")]
    ScoreOutOfRange {
        trait_: Trait,
        score: i64,
        min: u8,
        max: u8,
    },

    #[error("rater {rater} is not assigned to {trait_}")]
    UnassignedRater { rater: RaterId, trait_: Trait },

    #[error("rater {0} supplied more than once")]
    DuplicateRater(RaterId),

    #[error("score vector is missing trait {0}")]
    MissingTrait(Trait),

    #[error("level {level} expects {expected} inputs, got {found}")]
    Arity {
        level: u8,
        expected: usize,
        found: usize,
    },

    #[error("rating vectors differ in length ({predicted} vs {gold})")]
    LengthMismatch { predicted: usize, gold: usize },

    #[error("rating vectors are empty")]
    EmptyRatings,

    #[error("rating value {value} outside 0..{levels}")]
    RatingOutOfRange { value: i64, levels: usize },

    #[error("need at least 2 score levels, got {0}")]
    TooFewLevels(usize),

    #[error("invalid bootstrap parameters: {0}")]
    InvalidBootstrap(String),

    #[error("report is missing groups: {}", .0.join(", "))]
    MissingGroups(Vec<String>),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("corpus has no essays with gold scores")]
    EmptyLabeledCorpus,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
