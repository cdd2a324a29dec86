//! Extraction of trait scores from raw model output.
//!
//! Three strategies are tried in order, and the first that yields any
//! requested trait wins:
//!
//! 1. the whole reply parsed as a JSON object;
//! 2. the first fenced code block, then each balanced `{...}` block;
//! 3. a labeled-number scan (`Organization: 4`, `التنظيم: ٤`).
//!
//! Arabic-Indic and Extended Arabic-Indic digits are normalized to ASCII
//! first. Out-of-range values are rejected per trait, never clamped.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::prompt::ResponseSchema;
use crate::rubric::{RaterId, RubricMapping, Trait};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Parsed,
    Partial,
    Failed,
}

impl fmt::Display for ParseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseStatus::Parsed => "parsed",
            ParseStatus::Partial => "partial",
            ParseStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedScores {
    pub scores: BTreeMap<Trait, u8>,
    pub model_reported_total: Option<i64>,
    pub justifications: BTreeMap<Trait, String>,
    pub status: ParseStatus,
    pub failure_reason: Option<String>,
}

impl ParsedScores {
    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            scores: BTreeMap::new(),
            model_reported_total: None,
            justifications: BTreeMap::new(),
            status: ParseStatus::Failed,
            failure_reason: Some(reason.into()),
        }
    }

    pub fn get(&self, t: Trait) -> Option<u8> {
        self.scores.get(&t).copied()
    }
}

/// What a label in model output refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKey {
    Trait(Trait),
    Total,
    Score,
    Justification,
    /// Names the trait of a `{"trait": ..., "score": ...}` entry.
    TraitName,
}

const BUILTIN_LABELS: &[(&str, LabelKey)] = &[
    ("organization", LabelKey::Trait(Trait::Organization)),
    ("organisation", LabelKey::Trait(Trait::Organization)),
    ("org", LabelKey::Trait(Trait::Organization)),
    (
        "organization and coherence",
        LabelKey::Trait(Trait::Organization),
    ),
    ("التنظيم", LabelKey::Trait(Trait::Organization)),
    ("تنظيم", LabelKey::Trait(Trait::Organization)),
    ("vocabulary", LabelKey::Trait(Trait::Vocabulary)),
    ("vocab", LabelKey::Trait(Trait::Vocabulary)),
    ("lexical variety", LabelKey::Trait(Trait::Vocabulary)),
    ("المفردات", LabelKey::Trait(Trait::Vocabulary)),
    ("مفردات", LabelKey::Trait(Trait::Vocabulary)),
    ("الثروة اللغوية", LabelKey::Trait(Trait::Vocabulary)),
    ("style", LabelKey::Trait(Trait::Style)),
    ("tone", LabelKey::Trait(Trait::Style)),
    ("الاسلوب", LabelKey::Trait(Trait::Style)),
    ("اسلوب", LabelKey::Trait(Trait::Style)),
    ("development", LabelKey::Trait(Trait::Development)),
    ("dev", LabelKey::Trait(Trait::Development)),
    ("content development", LabelKey::Trait(Trait::Development)),
    ("idea development", LabelKey::Trait(Trait::Development)),
    ("تطوير الافكار", LabelKey::Trait(Trait::Development)),
    ("تطوير المحتوى", LabelKey::Trait(Trait::Development)),
    ("التطوير", LabelKey::Trait(Trait::Development)),
    ("تطوير", LabelKey::Trait(Trait::Development)),
    ("mechanics", LabelKey::Trait(Trait::Mechanics)),
    ("mech", LabelKey::Trait(Trait::Mechanics)),
    (
        "spelling and punctuation",
        LabelKey::Trait(Trait::Mechanics),
    ),
    ("الاملاء", LabelKey::Trait(Trait::Mechanics)),
    ("الاملاء وعلامات الترقيم", LabelKey::Trait(Trait::Mechanics)),
    ("الميكانيكا", LabelKey::Trait(Trait::Mechanics)),
    ("structure", LabelKey::Trait(Trait::Structure)),
    ("struct", LabelKey::Trait(Trait::Structure)),
    ("sentence structure", LabelKey::Trait(Trait::Structure)),
    ("grammar", LabelKey::Trait(Trait::Structure)),
    ("البنية", LabelKey::Trait(Trait::Structure)),
    ("بنية", LabelKey::Trait(Trait::Structure)),
    ("التراكيب", LabelKey::Trait(Trait::Structure)),
    ("القواعد", LabelKey::Trait(Trait::Structure)),
    ("relevance", LabelKey::Trait(Trait::Relevance)),
    ("rel", LabelKey::Trait(Trait::Relevance)),
    ("الصلة بالموضوع", LabelKey::Trait(Trait::Relevance)),
    ("الارتباط بالموضوع", LabelKey::Trait(Trait::Relevance)),
    ("الملاءمة", LabelKey::Trait(Trait::Relevance)),
    ("total", LabelKey::Total),
    ("total score", LabelKey::Total),
    ("model reported total", LabelKey::Total),
    ("overall", LabelKey::Total),
    ("المجموع", LabelKey::Total),
    ("الدرجة الكلية", LabelKey::Total),
    ("المجموع الكلي", LabelKey::Total),
    ("score", LabelKey::Score),
    ("trait score", LabelKey::Score),
    ("الدرجة", LabelKey::Score),
    ("justification", LabelKey::Justification),
    ("justifications", LabelKey::Justification),
    ("rationale", LabelKey::Justification),
    ("reason", LabelKey::Justification),
    ("reasoning", LabelKey::Justification),
    ("explanation", LabelKey::Justification),
    ("التبرير", LabelKey::Justification),
    ("تبرير", LabelKey::Justification),
    ("المبرر", LabelKey::Justification),
    ("trait", LabelKey::TraitName),
    ("name", LabelKey::TraitName),
    ("rubric", LabelKey::TraitName),
    ("السمة", LabelKey::TraitName),
];

/// Synonym table mapping label variants to what they name.
#[derive(Debug, Clone)]
pub struct LabelTable {
    entries: Vec<(String, LabelKey)>,
}

impl Default for LabelTable {
    fn default() -> Self {
        let mut table = Self {
            entries: Vec::new(),
        };
        for (label, key) in BUILTIN_LABELS {
            table.add(label, *key);
        }
        table
    }
}

impl LabelTable {
    pub fn add(&mut self, label: &str, key: LabelKey) {
        let norm = normalize_label(label);
        if !self.entries.iter().any(|(l, _)| *l == norm) {
            self.entries.push((norm, key));
        }
    }

    pub fn lookup(&self, label: &str) -> Option<LabelKey> {
        let norm = normalize_label(label);
        let find = |s: &str| self.entries.iter().find(|(l, _)| l == s).map(|(_, k)| *k);
        find(&norm).or_else(|| {
            let stripped = norm
                .strip_suffix(" score")
                .or_else(|| norm.strip_prefix("درجة "))?;
            find(stripped.trim())
        })
    }

    fn labels_for(&self, key: LabelKey) -> Vec<&str> {
        let mut labels: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, k)| *k == key)
            .map(|(l, _)| l.as_str())
            .collect();
        labels.sort_by_key(|l| std::cmp::Reverse(l.chars().count()));
        labels
    }
}

/// Maps Arabic-Indic (U+0660..) and Extended Arabic-Indic (U+06F0..) digits to ASCII.
pub fn normalize_digits(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\u{0660}'..='\u{0669}' => char::from(b'0' + (c as u32 - 0x0660) as u8),
            '\u{06F0}'..='\u{06F9}' => char::from(b'0' + (c as u32 - 0x06F0) as u8),
            _ => c,
        })
        .collect()
}

fn normalize_label(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.trim().chars() {
        let c = match c {
            'أ' | 'إ' | 'آ' | 'ٱ' => 'ا',
            '_' | '-' | '.' => ' ',
            // tashkeel and tatweel
            '\u{064B}'..='\u{0652}' | '\u{0640}' => continue,
            c => c,
        };
        out.extend(c.to_lowercase());
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_level1(raw: &str) -> ParsedScores {
    parse_with(raw, &ResponseSchema::holistic(), &LabelTable::default())
}

pub fn parse_level2(raw: &str, rater: RaterId, mapping: &RubricMapping) -> ParsedScores {
    parse_with(
        raw,
        &ResponseSchema::for_rater(rater, mapping),
        &LabelTable::default(),
    )
}

pub fn parse_level3(raw: &str, trait_: Trait) -> ParsedScores {
    parse_with(raw, &ResponseSchema::single(trait_), &LabelTable::default())
}

/// Accumulated findings for one strategy.
#[derive(Default)]
struct Found {
    scores: BTreeMap<Trait, i64>,
    rejected: Vec<String>,
    total: Option<i64>,
    justifications: BTreeMap<Trait, String>,
    generic_score: Option<i64>,
    generic_justification: Option<String>,
}

impl Found {
    fn put_score(&mut self, t: Trait, value: Result<i64, String>) {
        if self.scores.contains_key(&t) {
            return;
        }
        match value {
            Ok(v) => {
                self.scores.insert(t, v);
            }
            Err(reason) => self.rejected.push(format!("{}: {reason}", t.key())),
        }
    }

    fn is_empty(&self) -> bool {
        self.scores.is_empty() && self.rejected.is_empty() && self.generic_score.is_none()
    }
}

/// Parses `raw` against an answer schema with a given label table.
pub fn parse_with(raw: &str, schema: &ResponseSchema, labels: &LabelTable) -> ParsedScores {
    let text = normalize_digits(raw);
    let text = text.trim();
    if text.is_empty() {
        return ParsedScores::failed("empty response");
    }

    let mut found = None;
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(text) {
        found = Some(from_object(&obj, labels));
    }
    if found.as_ref().is_none_or(|f| !relevant(f, schema)) {
        if let Some(f) = embedded_objects(text)
            .into_iter()
            .map(|obj| from_object(&obj, labels))
            .find(|f| relevant(f, schema))
        {
            found = Some(f);
        }
    }
    if found.as_ref().is_none_or(|f| !relevant(f, schema)) {
        let scanned = scan_labels(text, schema, labels);
        if relevant(&scanned, schema) {
            found = Some(scanned);
        }
    }
    match found {
        Some(f) if relevant(&f, schema) => finish(f, schema),
        _ => ParsedScores::failed("no answer block or labeled scores found"),
    }
}

fn relevant(f: &Found, schema: &ResponseSchema) -> bool {
    if f.is_empty() {
        return false;
    }
    let single = schema.justification && schema.traits.len() == 1;
    (single && f.generic_score.is_some())
        || schema.traits.iter().any(|t| f.scores.contains_key(t))
        || f.rejected
            .iter()
            .any(|r| schema.traits.iter().any(|t| r.starts_with(t.key())))
}

fn finish(mut f: Found, schema: &ResponseSchema) -> ParsedScores {
    let single = schema.justification && schema.traits.len() == 1;
    if single {
        let t = schema.traits[0];
        if let Some(v) = f.generic_score.take() {
            f.scores.entry(t).or_insert(v);
        }
        if let Some(j) = f.generic_justification.take() {
            f.justifications.entry(t).or_insert(j);
        }
    }

    let mut out = ParsedScores {
        scores: BTreeMap::new(),
        model_reported_total: if schema.total { f.total } else { None },
        justifications: BTreeMap::new(),
        status: ParseStatus::Failed,
        failure_reason: None,
    };
    let mut reasons: Vec<String> = f
        .rejected
        .iter()
        .filter(|r| schema.traits.iter().any(|t| r.starts_with(t.key())))
        .cloned()
        .collect();
    for (t, v) in &f.scores {
        if !schema.traits.contains(t) {
            tracing::debug!(trait_ = t.key(), value = v, "ignoring unrequested trait");
            continue;
        }
        if t.in_range(*v) {
            out.scores.insert(*t, *v as u8);
        } else {
            reasons.push(format!(
                "{}: {v} outside {}..={}",
                t.key(),
                t.min_score(),
                t.max_score()
            ));
        }
    }
    for (t, j) in f.justifications {
        if schema.traits.contains(&t) {
            out.justifications.insert(t, j);
        }
    }
    let missing: Vec<&str> = schema
        .traits
        .iter()
        .filter(|t| !out.scores.contains_key(t))
        .map(|t| t.key())
        .collect();
    out.status = if missing.is_empty() {
        ParseStatus::Parsed
    } else if out.scores.is_empty() {
        ParseStatus::Failed
    } else {
        ParseStatus::Partial
    };
    if !missing.is_empty() {
        reasons.push(format!("missing: {}", missing.join(", ")));
        out.failure_reason = Some(reasons.join("; "));
    }
    if out.status == ParseStatus::Failed {
        out.justifications.clear();
        out.model_reported_total = None;
    }
    out
}

/// Reads an integer score out of a JSON value.
fn score_value(v: &Value) -> Option<Result<i64, String>> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(Ok(i))
            } else {
                let f = n.as_f64()?;
                if f.fract() == 0.0 && f.abs() < 1e9 {
                    Some(Ok(f as i64))
                } else {
                    Some(Err(format!("non-integer score {f}")))
                }
            }
        }
        Value::String(s) => leading_integer(s),
        Value::Object(obj) => obj.iter().find_map(|(k, v)| {
            let key = normalize_label(k);
            (key == "score" || key == "value" || key == "الدرجة")
                .then(|| score_value(v))
                .flatten()
        }),
        _ => None,
    }
}

static LEADING_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(-?\d+)(?:\.(\d+))?").expect("number regex"));

fn leading_integer(s: &str) -> Option<Result<i64, String>> {
    let cap = LEADING_NUMBER.captures(s)?;
    if let Some(frac) = cap.get(2) {
        if frac.as_str().bytes().any(|b| b != b'0') {
            return Some(Err(format!("non-integer score {}", cap[0].trim())));
        }
    }
    Some(cap[1].parse::<i64>().map_err(|e| e.to_string()))
}

fn from_object(obj: &Map<String, Value>, labels: &LabelTable) -> Found {
    let mut found = Found::default();
    walk(obj, labels, &mut found, 0);
    found
}

fn walk(obj: &Map<String, Value>, labels: &LabelTable, found: &mut Found, depth: usize) {
    if depth > 4 {
        return;
    }
    // `{"trait": "organization", "score": 4, "justification": "..."}`
    let named = obj.iter().find_map(|(k, v)| match (labels.lookup(k), v) {
        (Some(LabelKey::TraitName), Value::String(name)) => match labels.lookup(name) {
            Some(LabelKey::Trait(t)) => Some(t),
            _ => None,
        },
        _ => None,
    });
    if let Some(t) = named {
        let score = obj.iter().find_map(|(k, v)| {
            matches!(labels.lookup(k), Some(LabelKey::Score)).then(|| score_value(v))?
        });
        if let Some(score) = score {
            found.put_score(t, score);
        }
        if let Some(j) = obj.iter().find_map(|(k, v)| {
            matches!(labels.lookup(k), Some(LabelKey::Justification)).then(|| v.as_str())?
        }) {
            found
                .justifications
                .entry(t)
                .or_insert_with(|| j.to_string());
        }
        return;
    }

    for (k, v) in obj {
        match labels.lookup(k) {
            Some(LabelKey::Trait(t)) => {
                if let Some(score) = score_value(v) {
                    found.put_score(t, score);
                }
                if let Value::Object(inner) = v {
                    if let Some(j) = inner.iter().find_map(|(k, v)| {
                        matches!(labels.lookup(k), Some(LabelKey::Justification))
                            .then(|| v.as_str())?
                    }) {
                        found
                            .justifications
                            .entry(t)
                            .or_insert_with(|| j.to_string());
                    }
                }
            }
            Some(LabelKey::Total) => {
                if found.total.is_none() {
                    if let Some(Ok(v)) = score_value(v) {
                        found.total = Some(v);
                    }
                }
            }
            Some(LabelKey::Score) => {
                if found.generic_score.is_none() {
                    match score_value(v) {
                        Some(Ok(s)) => found.generic_score = Some(s),
                        Some(Err(reason)) => found.rejected.push(format!("score: {reason}")),
                        None => {}
                    }
                }
            }
            Some(LabelKey::Justification) => match v {
                Value::String(s) => {
                    found.generic_justification.get_or_insert_with(|| s.clone());
                }
                Value::Object(per_trait) => {
                    for (tk, tv) in per_trait {
                        if let (Some(LabelKey::Trait(t)), Some(s)) =
                            (labels.lookup(tk), tv.as_str())
                        {
                            found
                                .justifications
                                .entry(t)
                                .or_insert_with(|| s.to_string());
                        }
                    }
                }
                _ => {}
            },
            Some(LabelKey::TraitName) => {}
            None => match v {
                Value::Object(inner) => walk(inner, labels, found, depth + 1),
                Value::Array(items) => {
                    for item in items {
                        if let Value::Object(inner) = item {
                            walk(inner, labels, found, depth + 1);
                        }
                    }
                }
                _ => {}
            },
        }
    }
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*\s*\n?(.*?)```").expect("fence regex"));

static TRAILING_COMMA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r",(\s*[}\]])").expect("comma regex"));

fn parse_object(s: &str) -> Option<Map<String, Value>> {
    let attempt = |s: &str| match serde_json::from_str::<Value>(s) {
        Ok(Value::Object(o)) => Some(o),
        _ => None,
    };
    attempt(s.trim()).or_else(|| attempt(&TRAILING_COMMA.replace_all(s.trim(), "$1")))
}

/// Candidate JSON objects embedded in free text: the first fenced block,
/// then every balanced brace block in order.
fn embedded_objects(text: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    if let Some(cap) = FENCE.captures(text) {
        let inner = cap[1].trim();
        if let Some(o) = parse_object(inner) {
            out.push(o);
        } else if let Some(block) = balanced_blocks(inner).into_iter().next() {
            out.extend(parse_object(block));
        }
    }
    out.extend(balanced_blocks(text).into_iter().filter_map(parse_object));
    out
}

fn balanced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut end = None;
        for (j, &b) in bytes.iter().enumerate().skip(i) {
            if in_str {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(j) => {
                blocks.push(&text[i..=j]);
                i = j + 1;
            }
            None => break,
        }
    }
    blocks
}

fn label_regex(labels: &[&str]) -> Option<Regex> {
    if labels.is_empty() {
        return None;
    }
    let alternation = labels
        .iter()
        .map(|l| regex::escape(l).replace(' ', r"[\s_\-]+"))
        .collect::<Vec<_>>()
        .join("|");
    // an attached Arabic conjunction ("والأسلوب") may precede the label
    let pattern = format!(
        r"(?i)(?:^|[^\p{{L}}\p{{N}}_])(?:و|ف)?(?:{alternation})(?:\s*\([^)\n]*\))?[^\d\n]{{0,16}}?(-?\d+)(?:\.(\d+))?"
    );
    Regex::new(&pattern).ok()
}

static JUSTIFICATION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^\W*(?:justification|rationale|reason|التبرير|تبرير|المبرر)\W*[:：]\s*(.+)$")
        .expect("justification regex")
});

fn scan_labels(text: &str, schema: &ResponseSchema, labels: &LabelTable) -> Found {
    let folded = fold_alef(text);
    let mut found = Found::default();
    let capture = |key: LabelKey| -> Option<Result<i64, String>> {
        let re = label_regex(&labels.labels_for(key))?;
        let cap = re.captures(&folded)?;
        if let Some(frac) = cap.get(2) {
            if frac.as_str().bytes().any(|b| b != b'0') {
                return Some(Err(format!(
                    "non-integer score {}.{}",
                    &cap[1],
                    frac.as_str()
                )));
            }
        }
        Some(cap[1].parse::<i64>().map_err(|e| e.to_string()))
    };
    for t in Trait::ALL {
        if let Some(v) = capture(LabelKey::Trait(t)) {
            found.put_score(t, v);
        }
    }
    if schema.total {
        if let Some(Ok(v)) = capture(LabelKey::Total) {
            found.total = Some(v);
        }
    }
    if schema.justification && schema.traits.len() == 1 {
        match capture(LabelKey::Score) {
            Some(Ok(v)) => found.generic_score = Some(v),
            Some(Err(reason)) => found.rejected.push(format!("score: {reason}")),
            None => {}
        }
        if let Some(cap) = JUSTIFICATION_LINE.captures(text) {
            found.generic_justification = Some(cap[1].trim().to_string());
        }
    }
    // a generic "score" rejection applies to the single requested trait
    if schema.traits.len() == 1 {
        let key = schema.traits[0].key();
        for r in &mut found.rejected {
            if let Some(rest) = r.strip_prefix("score:") {
                *r = format!("{key}:{rest}");
            }
        }
    }
    found
}

/// Folds alef variants and strips tashkeel so scan labels match
/// orthographic variants. Byte offsets are not preserved.
fn fold_alef(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, '\u{064B}'..='\u{0652}' | '\u{0640}'))
        .map(|c| match c {
            'أ' | 'إ' | 'آ' | 'ٱ' => 'ا',
            c => c,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_level1_object() {
        let raw = r#"{"organization":4,"vocabulary":4,"style":4,"development":4,"mechanics":4,"structure":4,"relevance":2,"total":26}"#;
        let p = parse_level1(raw);
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.scores.len(), 7);
        assert_eq!(p.model_reported_total, Some(26));
        assert_eq!(p.failure_reason, None);
    }

    #[test]
    fn prose_without_numbers_fails() {
        let p = parse_level1("This essay is quite good overall but lacks depth.");
        assert_eq!(p.status, ParseStatus::Failed);
        assert!(p.scores.is_empty());
    }

    #[test]
    fn out_of_range_relevance_is_partial() {
        let raw = r#"{"organization":4,"vocabulary":4,"style":4,"development":4,"mechanics":4,"structure":4,"relevance":4}"#;
        let p = parse_level1(raw);
        assert_eq!(p.status, ParseStatus::Partial);
        assert_eq!(p.get(Trait::Relevance), None);
        assert!(p
            .failure_reason
            .unwrap()
            .contains("relevance: 4 outside 0..=2"));
    }

    #[test]
    fn level2_restricts_to_rater_traits() {
        let m = RubricMapping::default();
        let raw = r#"{"organization":3,"vocabulary":4,"style":2,"mechanics":5,"structure":3}"#;
        let p = parse_level2(raw, RaterId::C, &m);
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.scores.len(), 5);

        let raw = r#"{"vocabulary":4,"style":2,"development":3,"structure":3,"relevance":1,"mechanics":5}"#;
        let p = parse_level2(raw, RaterId::B, &m);
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.get(Trait::Mechanics), None);

        assert_eq!(parse_level2("", RaterId::B, &m).status, ParseStatus::Failed);
    }

    #[test]
    fn level3_object_and_fence() {
        let p = parse_level3(r#"{"score":3,"justification":"جيد"}"#, Trait::Vocabulary);
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.get(Trait::Vocabulary), Some(3));
        assert_eq!(p.justifications[&Trait::Vocabulary], "جيد");

        let fenced =
            "Here is my evaluation:\n```json\n{\"score\":3,\"justification\":\"جيد\"}\n```\n";
        assert_eq!(parse_level3(fenced, Trait::Vocabulary), p);
    }

    #[test]
    fn level3_out_of_range_fails() {
        let p = parse_level3(r#"{"score":7,"justification":"x"}"#, Trait::Style);
        assert_eq!(p.status, ParseStatus::Failed);
        assert!(p.scores.is_empty());
        assert!(p.failure_reason.unwrap().contains("outside 0..=5"));
    }

    #[test]
    fn arabic_digits_and_labels() {
        let raw = "التنظيم: ٤\nالمفردات: ٣\nالأسلوب: ٣\nالتطوير: ٢\nالإملاء: ٤\nالبنية: ٣\nالصلة بالموضوع: ٢\nالمجموع: ٢١";
        let p = parse_level1(raw);
        assert_eq!(p.status, ParseStatus::Parsed, "{:?}", p.failure_reason);
        assert_eq!(p.get(Trait::Organization), Some(4));
        assert_eq!(p.get(Trait::Relevance), Some(2));
        assert_eq!(p.model_reported_total, Some(21));
    }

    #[test]
    fn range_parenthetical_is_skipped() {
        let raw = "Organization (0-5): 4\nVocabulary (0-5): 3\nStyle (0-5): 3\nDevelopment (0-5): 2\nMechanics (0-5): 4\nStructure (0-5): 3\nRelevance (0-2): 1";
        let p = parse_level1(raw);
        assert_eq!(p.status, ParseStatus::Parsed);
        assert_eq!(p.get(Trait::Organization), Some(4));
        assert_eq!(p.get(Trait::Relevance), Some(1));
    }

    #[test]
    fn label_normalization() {
        let t = LabelTable::default();
        assert_eq!(
            t.lookup("Organization_Score"),
            Some(LabelKey::Trait(Trait::Organization))
        );
        assert_eq!(t.lookup("الأسلوب"), Some(LabelKey::Trait(Trait::Style)));
        assert_eq!(
            t.lookup("درجة التنظيم"),
            Some(LabelKey::Trait(Trait::Organization))
        );
        assert_eq!(t.lookup("unrelated"), None);
    }

    #[test]
    fn trailing_comma_is_tolerated() {
        let p = parse_level3(
            "Result: {\"score\": 2, \"justification\": \"ok\",}",
            Trait::Relevance,
        );
        assert_eq!(p.get(Trait::Relevance), Some(2));
    }

    #[test]
    fn digit_normalization() {
        assert_eq!(normalize_digits("٠١٢٣٤٥٦٧٨٩ ۴"), "0123456789 4");
    }
}
