//! Prompt rendering for the three prompting levels.
//!
//! * Level 1 asks for every trait plus a total in one pass.
//! * Level 2 is rendered once per specialist rater and asks only for the
//!   traits that rater is assigned.
//! * Level 3 is rendered once per trait with a rubric guide and a scored
//!   low/mid/high example triple.
//!
//! Templates are plain text with `{slot}` markers. Rendering is a single
//! substitution pass, so slot-like text inside an essay is never expanded.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Essay;
use crate::error::{Error, Result};
use crate::rubric::{RaterId, RaterSpec, RubricMapping, Trait, MAX_TOTAL};

static SLOT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("slot regex"));

/// Prompting level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Level {
    Holistic = 1,
    Hybrid = 2,
    RubricFewShot = 3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Holistic, Level::Hybrid, Level::RubricFewShot];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Slots a template body at this level may reference. All are required.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            Level::Holistic => &["essay"],
            Level::Hybrid => &["essay", "rater_focus", "assigned_traits"],
            Level::RubricFewShot => &["essay", "trait_rubric", "examples"],
        }
    }

    /// Number of prompts rendered per essay.
    pub fn prompts_per_essay(self) -> usize {
        match self {
            Level::Holistic => 1,
            Level::Hybrid => RaterId::ALL.len(),
            Level::RubricFewShot => Trait::ALL.len(),
        }
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l.number()
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            1 => Ok(Level::Holistic),
            2 => Ok(Level::Hybrid),
            3 => Ok(Level::RubricFewShot),
            other => Err(format!("prompt level must be 1, 2 or 3, got {other}")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let digits = s.strip_prefix(['L', 'l']).unwrap_or(s);
        let n: u8 = digits
            .parse()
            .map_err(|_| format!("invalid prompt level `{s}`"))?;
        Level::try_from(n)
    }
}

/// What a rendered prompt asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    All,
    Rater(RaterId),
    Trait(Trait),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::All => f.write_str("all"),
            Subject::Rater(r) => write!(f, "{r}"),
            Subject::Trait(t) => f.write_str(t.key()),
        }
    }
}

impl FromStr for Subject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Subject::All);
        }
        if s.len() == 1 {
            return s.parse().map(Subject::Rater);
        }
        s.parse().map(Subject::Trait)
    }
}

impl Serialize for Subject {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subject {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Machine-readable description of the answer block a prompt requests.
///
/// Its string form (`traits=organization,style;total;justification`) is what
/// the mock backend keys on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResponseSchema {
    pub traits: Vec<Trait>,
    pub total: bool,
    pub justification: bool,
}

impl ResponseSchema {
    pub fn holistic() -> Self {
        Self {
            traits: Trait::ALL.to_vec(),
            total: true,
            justification: false,
        }
    }

    pub fn for_rater(rater: RaterId, mapping: &RubricMapping) -> Self {
        Self {
            traits: mapping.rubrics_for(rater),
            total: false,
            justification: false,
        }
    }

    pub fn single(t: Trait) -> Self {
        Self {
            traits: vec![t],
            total: false,
            justification: true,
        }
    }

    /// JSON skeleton shown to the model.
    pub fn skeleton(&self) -> String {
        if self.justification && self.traits.len() == 1 {
            let t = self.traits[0];
            return format!(
                "{{\"score\": <integer {}-{}>, \"justification\": \"<text>\"}}",
                t.min_score(),
                t.max_score()
            );
        }
        let mut parts: Vec<String> = self
            .traits
            .iter()
            .map(|t| {
                format!(
                    "\"{}\": <integer {}-{}>",
                    t.key(),
                    t.min_score(),
                    t.max_score()
                )
            })
            .collect();
        if self.total {
            parts.push(format!("\"total\": <integer 0-{MAX_TOTAL}>"));
        }
        if self.justification {
            parts.push("\"justification\": \"<text>\"".to_string());
        }
        format!("{{{}}}", parts.join(", "))
    }
}

impl fmt::Display for ResponseSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<&str> = self.traits.iter().map(|t| t.key()).collect();
        write!(f, "traits={}", keys.join(","))?;
        if self.total {
            f.write_str(";total")?;
        }
        if self.justification {
            f.write_str(";justification")?;
        }
        Ok(())
    }
}

impl FromStr for ResponseSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut schema = ResponseSchema {
            traits: Vec::new(),
            total: false,
            justification: false,
        };
        for part in s.split(';') {
            match part.trim() {
                "total" => schema.total = true,
                "justification" => schema.justification = true,
                p => {
                    let list = p
                        .strip_prefix("traits=")
                        .ok_or_else(|| Error::UnknownTrait(p.to_string()))?;
                    for key in list.split(',').filter(|k| !k.is_empty()) {
                        schema.traits.push(key.parse()?);
                    }
                }
            }
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub level: Level,
    pub body: String,
    /// Instruction placed before the JSON skeleton of the requested answer.
    pub output_schema_hint: String,
}

const DEFAULT_SCHEMA_HINT: &str =
    "Respond with a single JSON object and nothing else, using exactly these keys:";

const DEFAULT_L1: &str = "You are an experienced examiner of Arabic argumentative writing.
Read the student essay below and score it on each of the seven linguistic traits:
Organization (0-5), Vocabulary (0-5), Style (0-5), Development (0-5),
Mechanics (0-5), Structure (0-5) and Relevance (0-2).
Give one integer score per trait, then a summed total score.

Essay:
{essay}
";

const DEFAULT_L2: &str = "You are a specialist rater of Arabic student essays.
Your specialization and evaluation focus: {rater_focus}
Judge only the dimensions within your expertise and disregard all others.

Score the essay below on these traits only:
{assigned_traits}

Essay:
{essay}
";

const DEFAULT_L3: &str = "You are scoring one trait of an Arabic student essay.
Scoring guide:
{trait_rubric}

Scored reference examples:
{examples}

Compare the target essay with the guide and the examples, then give a trait score with a short justification.

Essay:
{essay}
";

impl PromptTemplate {
    pub fn new(level: Level, body: impl Into<String>) -> Self {
        Self {
            level,
            body: body.into(),
            output_schema_hint: DEFAULT_SCHEMA_HINT.to_string(),
        }
    }

    pub fn with_schema_hint(mut self, hint: impl Into<String>) -> Self {
        self.output_schema_hint = hint.into();
        self
    }

    pub fn default_for(level: Level) -> Self {
        let body = match level {
            Level::Holistic => DEFAULT_L1,
            Level::Hybrid => DEFAULT_L2,
            Level::RubricFewShot => DEFAULT_L3,
        };
        Self::new(level, body)
    }

    pub fn load(level: Level, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        Ok(Self::new(level, text))
    }

    /// Slot names referenced by the body, in order of first appearance.
    pub fn referenced_slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for cap in SLOT.captures_iter(&self.body) {
            let name = cap[1].to_string();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    /// Checks slot coverage: no unknown slots, every level slot present.
    pub fn check(&self) -> Result<()> {
        let allowed = self.level.slots();
        let referenced = self.referenced_slots();
        if let Some(unknown) = referenced.iter().find(|s| !allowed.contains(&s.as_str())) {
            return Err(Error::UnresolvedSlot {
                slot: unknown.clone(),
                level: self.level.number(),
            });
        }
        if let Some(missing) = allowed.iter().find(|s| !referenced.iter().any(|r| r == *s)) {
            return Err(Error::MissingSlot {
                slot: missing.to_string(),
                level: self.level.number(),
            });
        }
        Ok(())
    }

    fn expect_level(&self, level: Level) -> Result<()> {
        if self.level != level {
            return Err(Error::LevelMismatch {
                expected: self.level.number(),
                found: level.number(),
            });
        }
        self.check()
    }

    fn fill(&self, values: &[(&str, &str)], schema: &ResponseSchema) -> String {
        let body = SLOT.replace_all(&self.body, |cap: &regex::Captures<'_>| {
            values
                .iter()
                .find(|(k, _)| *k == &cap[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| cap[0].to_string())
        });
        let mut text = body.trim_end().to_string();
        text.push_str("\n\n");
        text.push_str(self.output_schema_hint.trim());
        text.push('\n');
        text.push_str(&schema.skeleton());
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub level: Level,
    pub essay_id: String,
    pub subject: Subject,
    pub content_hash: String,
    #[serde(skip)]
    pub schema: Option<ResponseSchema>,
}

impl RenderedPrompt {
    fn new(
        text: String,
        level: Level,
        essay_id: &str,
        subject: Subject,
        schema: ResponseSchema,
    ) -> Self {
        let content_hash = content_hash(&text);
        Self {
            text,
            level,
            essay_id: essay_id.to_string(),
            subject,
            content_hash,
            schema: Some(schema),
        }
    }

    /// The answer schema, reconstructed from level and subject when absent.
    pub fn response_schema(&self, mapping: &RubricMapping) -> ResponseSchema {
        if let Some(s) = &self.schema {
            return s.clone();
        }
        match self.subject {
            Subject::All => ResponseSchema::holistic(),
            Subject::Rater(r) => ResponseSchema::for_rater(r, mapping),
            Subject::Trait(t) => ResponseSchema::single(t),
        }
    }
}

/// Hex SHA-256 of the prompt text.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn render_level1(essay: &Essay, template: &PromptTemplate) -> Result<RenderedPrompt> {
    template.expect_level(Level::Holistic)?;
    let schema = ResponseSchema::holistic();
    let text = template.fill(&[("essay", &essay.text)], &schema);
    Ok(RenderedPrompt::new(
        text,
        Level::Holistic,
        &essay.id,
        Subject::All,
        schema,
    ))
}

pub fn render_level2(
    essay: &Essay,
    rater: &RaterSpec,
    mapping: &RubricMapping,
    template: &PromptTemplate,
) -> Result<RenderedPrompt> {
    template.expect_level(Level::Hybrid)?;
    let schema = ResponseSchema::for_rater(rater.id, mapping);
    let focus = format!("{} ({})", rater.specialization, rater.focus);
    let assigned = schema
        .traits
        .iter()
        .map(|t| {
            format!(
                "- {} ({}-{})",
                t.display_name(),
                t.min_score(),
                t.max_score()
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let text = template.fill(
        &[
            ("essay", &essay.text),
            ("rater_focus", &focus),
            ("assigned_traits", &assigned),
        ],
        &schema,
    );
    Ok(RenderedPrompt::new(
        text,
        Level::Hybrid,
        &essay.id,
        Subject::Rater(rater.id),
        schema,
    ))
}

pub fn render_level3(
    essay: &Essay,
    trait_: Trait,
    examples: &[FewShotExample],
    template: &PromptTemplate,
) -> Result<RenderedPrompt> {
    template.expect_level(Level::RubricFewShot)?;
    let triple = check_triple(trait_, examples)?;
    let schema = ResponseSchema::single(trait_);
    let rubric = format!(
        "{} ({}-{}): {}",
        trait_.display_name(),
        trait_.min_score(),
        trait_.max_score(),
        rubric_guide(trait_)
    );
    let shots = triple
        .iter()
        .map(|ex| {
            format!(
                "[{} example, score {}]\n{}\nJustification: {}",
                ex.band, ex.score, ex.excerpt, ex.justification
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let text = template.fill(
        &[
            ("essay", &essay.text),
            ("trait_rubric", &rubric),
            ("examples", &shots),
        ],
        &schema,
    );
    Ok(RenderedPrompt::new(
        text,
        Level::RubricFewShot,
        &essay.id,
        Subject::Trait(trait_),
        schema,
    ))
}

/// Default per-trait scoring guide used in level 3 prompts.
pub fn rubric_guide(t: Trait) -> &'static str {
    match t {
        Trait::Organization => "Clear introduction, body and conclusion; ideas ordered logically with smooth paragraph transitions.",
        Trait::Vocabulary => "Accurate, varied and precise word choice suited to the topic; little repetition.",
        Trait::Style => "Consistent formal register and voice appropriate to an argumentative essay and its audience.",
        Trait::Development => "Claims are elaborated with reasons, examples and evidence; the argument is developed in depth.",
        Trait::Mechanics => "Correct spelling, punctuation and orthographic conventions (hamza, taa marbuta, diacritics where needed).",
        Trait::Structure => "Grammatically well-formed sentences with correct agreement, case endings and varied syntax.",
        Trait::Relevance => "The essay addresses the writing prompt: 0 off-topic, 1 partly relevant, 2 fully relevant.",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    /// Conventional example score: 1/3/5 on a 0-5 scale, 0/1/2 for Relevance.
    pub fn default_score(self, t: Trait) -> u8 {
        match (t.max_score(), self) {
            (2, Band::Low) => 0,
            (2, Band::Mid) => 1,
            (2, Band::High) => 2,
            (_, Band::Low) => 1,
            (_, Band::Mid) => 3,
            (_, Band::High) => 5,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub band: Band,
    pub score: i64,
    pub excerpt: String,
    pub justification: String,
}

/// Validates a trait's example set and returns it ordered low, mid, high.
pub fn check_triple(trait_: Trait, examples: &[FewShotExample]) -> Result<[&FewShotExample; 3]> {
    for ex in examples {
        if ex.trait_ != trait_ {
            return Err(Error::ExampleTraitMismatch {
                expected: trait_,
                found: ex.trait_,
            });
        }
        if !trait_.in_range(ex.score) {
            return Err(Error::ScoreOutOfRange {
                trait_,
                score: ex.score,
                min: trait_.min_score(),
                max: trait_.max_score(),
            });
        }
    }
    let mut picked = Vec::with_capacity(3);
    for band in Band::ALL {
        let mut matching = examples.iter().filter(|e| e.band == band);
        let first = matching.next().ok_or(Error::MissingBand(band))?;
        if matching.next().is_some() {
            return Err(Error::DuplicateBand(band));
        }
        picked.push(first);
    }
    Ok([picked[0], picked[1], picked[2]])
}

pub type FewShotSet = BTreeMap<Trait, Vec<FewShotExample>>;

/// Loads a JSONL few-shot file; every trait must have a valid triple.
pub fn load_fewshot(path: &Path) -> Result<FewShotSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fewshot(&text)
}

pub fn parse_fewshot(text: &str) -> Result<FewShotSet> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut set = FewShotSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: FewShotExample = serde_json::from_str(line).map_err(|e| Error::MalformedRow {
            row: i + 1,
            field: "<example>".to_string(),
            message: e.to_string(),
        })?;
        set.entry(ex.trait_).or_default().push(ex);
    }
    for t in Trait::ALL {
        let examples = set.get(&t).ok_or(Error::MissingFewShotTrait(t))?;
        check_triple(t, examples)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rubric::RaterId;

    fn essay(text: &str) -> Essay {
        Essay {
            id: "E1".into(),
            prompt_id: "p1".into(),
            text: text.into(),
            gold: None,
        }
    }

    fn triple(t: Trait, scores: [i64; 3]) -> Vec<FewShotExample> {
        Band::ALL
            .iter()
            .zip(scores)
            .map(|(&band, score)| FewShotExample {
                trait_: t,
                band,
                score,
                excerpt: format!("excerpt {band}"),
                justification: format!("why {score}"),
            })
            .collect()
    }

    #[test]
    fn level1_substitutes_and_is_deterministic() {
        let e = essay("التكنولوجيا غيرت حياتنا {not_a_slot}");
        let t = PromptTemplate::default_for(Level::Holistic);
        let a = render_level1(&e, &t).unwrap();
        let b = render_level1(&e, &t).unwrap();
        assert!(a.text.contains("التكنولوجيا غيرت حياتنا {not_a_slot}"));
        for tr in Trait::ALL {
            assert!(a.text.contains(tr.display_name()));
        }
        assert!(a.text.contains("\"total\""));
        assert_eq!(a.subject, Subject::All);
        assert_eq!(a.content_hash, b.content_hash);
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn missing_essay_slot_is_an_error() {
        let t = PromptTemplate::new(Level::Holistic, "Score this.");
        let err = render_level1(&essay("x"), &t).unwrap_err();
        assert!(matches!(err, Error::MissingSlot { ref slot, .. } if slot == "essay"));
    }

    #[test]
    fn unknown_slot_is_named() {
        let t = PromptTemplate::new(Level::Holistic, "{essay} {examples}");
        let err = render_level1(&essay("x"), &t).unwrap_err();
        assert!(err.to_string().contains("{examples}"), "{err}");
    }

    #[test]
    fn wrong_level_template() {
        let t = PromptTemplate::default_for(Level::Hybrid);
        assert!(matches!(
            render_level1(&essay("x"), &t),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn level2_requests_only_assigned_traits() {
        let m = RubricMapping::default();
        let t = PromptTemplate::default_for(Level::Hybrid);
        let b = render_level2(&essay("x"), RaterId::B.spec(), &m, &t).unwrap();
        assert!(b.text.contains("Vocabulary"));
        assert!(b.text.contains("Style"));
        assert!(!b.text.to_lowercase().contains("mechanics"));
        assert!(b.text.contains(RaterId::B.spec().focus));
        assert_eq!(b.subject, Subject::Rater(RaterId::B));

        let c = render_level2(&essay("x"), RaterId::C.spec(), &m, &t).unwrap();
        assert_eq!(c.schema.as_ref().unwrap().traits.len(), 5);

        let a1 = render_level2(&essay("x"), RaterId::A.spec(), &m, &t).unwrap();
        let a2 = render_level2(&essay("x"), RaterId::A.spec(), &m, &t).unwrap();
        assert_eq!(a1.content_hash, a2.content_hash);
    }

    #[test]
    fn level3_includes_examples() {
        let t = PromptTemplate::default_for(Level::RubricFewShot);
        let ex = triple(Trait::Vocabulary, [1, 3, 5]);
        let p = render_level3(&essay("x"), Trait::Vocabulary, &ex, &t).unwrap();
        for s in ["score 1", "score 3", "score 5"] {
            assert!(p.text.contains(s), "{s}");
        }
        assert!(p.text.contains("\"justification\""));
        assert_eq!(p.subject, Subject::Trait(Trait::Vocabulary));

        let rel = triple(Trait::Relevance, [0, 1, 2]);
        assert!(render_level3(&essay("x"), Trait::Relevance, &rel, &t).is_ok());
    }

    #[test]
    fn level3_band_and_trait_errors() {
        let t = PromptTemplate::default_for(Level::RubricFewShot);
        let mut ex = triple(Trait::Vocabulary, [1, 3, 5]);
        ex.pop();
        let err = render_level3(&essay("x"), Trait::Vocabulary, &ex, &t).unwrap_err();
        assert_eq!(err.to_string(), "missing band: high");

        let ex = triple(Trait::Style, [1, 3, 5]);
        assert!(matches!(
            render_level3(&essay("x"), Trait::Vocabulary, &ex, &t),
            Err(Error::ExampleTraitMismatch { .. })
        ));
    }

    #[test]
    fn band_defaults() {
        assert_eq!(
            Band::ALL.map(|b| b.default_score(Trait::Vocabulary)),
            [1, 3, 5]
        );
        assert_eq!(
            Band::ALL.map(|b| b.default_score(Trait::Relevance)),
            [0, 1, 2]
        );
    }

    fn fewshot_text(skip: Option<Trait>, relevance_high: i64) -> String {
        let mut lines = Vec::new();
        for t in Trait::ALL {
            if Some(t) == skip {
                continue;
            }
            for b in Band::ALL {
                let score = if t == Trait::Relevance && b == Band::High {
                    relevance_high
                } else {
                    i64::from(b.default_score(t))
                };
                let ex = FewShotExample {
                    trait_: t,
                    band: b,
                    score,
                    excerpt: "نص".into(),
                    justification: "سبب".into(),
                };
                lines.push(serde_json::to_string(&ex).unwrap());
            }
        }
        lines.join("\n")
    }

    #[test]
    fn fewshot_loading() {
        let set = parse_fewshot(&fewshot_text(None, 2)).unwrap();
        assert_eq!(set.len(), 7);
        assert_eq!(set.values().map(Vec::len).sum::<usize>(), 21);

        let err = parse_fewshot(&fewshot_text(Some(Trait::Relevance), 2)).unwrap_err();
        assert!(matches!(err, Error::MissingFewShotTrait(Trait::Relevance)));

        let err = parse_fewshot(&fewshot_text(None, 5)).unwrap_err();
        assert!(matches!(
            err,
            Error::ScoreOutOfRange {
                trait_: Trait::Relevance,
                score: 5,
                ..
            }
        ));
    }

    #[test]
    fn schema_hint_round_trip() {
        let m = RubricMapping::default();
        for s in [
            ResponseSchema::holistic(),
            ResponseSchema::for_rater(RaterId::D, &m),
            ResponseSchema::single(Trait::Relevance),
        ] {
            assert_eq!(s.to_string().parse::<ResponseSchema>().unwrap(), s);
        }
    }

    #[test]
    fn level_parsing() {
        assert_eq!("L2".parse::<Level>().unwrap(), Level::Hybrid);
        assert_eq!("3".parse::<Level>().unwrap(), Level::RubricFewShot);
        assert!("4".parse::<Level>().is_err());
        assert_eq!(serde_json::to_string(&Level::Hybrid).unwrap(), "2");
    }
}
