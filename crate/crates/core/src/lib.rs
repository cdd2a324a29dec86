//! Trait-level scoring of Arabic essays with language models.
//!
//! Essays are scored at three prompting levels (holistic, rater-persona
//! hybrid, and per-trait rubric with few-shot anchors), parsed into trait
//! score vectors and compared against human gold scores with quadratic
//! weighted kappa and bootstrap confidence intervals.

pub mod aggregation;
pub mod config;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod rubric;

pub use error::{Error, Result};
