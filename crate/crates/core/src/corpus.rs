//! Essays and gold trait annotations.
//!
//! Two on-disk layouts share one schema: CSV with the header
//! `essay_id,prompt_id,text,organization,vocabulary,style,development,mechanics,structure,relevance,total`
//! and JSONL with one object per essay using the same keys. An essay whose
//! score fields are all empty (CSV) or absent/null (JSONL) is unlabeled.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rubric::{Trait, MAX_TOTAL};

pub const CSV_HEADER: [&str; 11] = [
    "essay_id",
    "prompt_id",
    "text",
    "organization",
    "vocabulary",
    "style",
    "development",
    "mechanics",
    "structure",
    "relevance",
    "total",
];

/// Integer trait scores in canonical order plus the total.
///
/// Construction is unchecked so that invalid annotations can be inspected
/// with [`validate_gold`]; [`TraitScoreVector::from_scores`] always yields a
/// consistent total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitScoreVector {
    pub organization: u8,
    pub vocabulary: u8,
    pub style: u8,
    pub development: u8,
    pub mechanics: u8,
    pub structure: u8,
    pub relevance: u8,
    pub total: u8,
}

impl TraitScoreVector {
    /// Builds a vector whose total is the sum of `scores` (canonical order).
    pub fn from_scores(scores: [u8; 7]) -> Self {
        let total = scores.iter().map(|&s| u32::from(s)).sum::<u32>();
        Self::with_total(scores, total.min(u32::from(u8::MAX)) as u8)
    }

    pub fn with_total(scores: [u8; 7], total: u8) -> Self {
        let [organization, vocabulary, style, development, mechanics, structure, relevance] =
            scores;
        Self {
            organization,
            vocabulary,
            style,
            development,
            mechanics,
            structure,
            relevance,
            total,
        }
    }

    pub fn zeros() -> Self {
        Self::from_scores([0; 7])
    }

    pub fn get(&self, t: Trait) -> u8 {
        self.scores()[t.index()]
    }

    pub fn scores(&self) -> [u8; 7] {
        [
            self.organization,
            self.vocabulary,
            self.style,
            self.development,
            self.mechanics,
            self.structure,
            self.relevance,
        ]
    }

    pub fn sum(&self) -> u32 {
        self.scores().iter().map(|&s| u32::from(s)).sum()
    }
}

/// A violated invariant of a [`TraitScoreVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldViolation {
    OutOfRange { trait_: Trait, value: u8 },
    TotalOutOfRange { total: u8 },
    TotalMismatch { total: u8, sum: u32 },
}

impl GoldViolation {
    /// Name of the offending column.
    pub fn field(&self) -> &'static str {
        match self {
            GoldViolation::OutOfRange { trait_, .. } => trait_.key(),
            _ => "total",
        }
    }
}

impl fmt::Display for GoldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoldViolation::OutOfRange { trait_, value } => write!(
                f,
                "{trait_} score {value} outside {}..={}",
                trait_.min_score(),
                trait_.max_score()
            ),
            GoldViolation::TotalOutOfRange { total } => {
                write!(f, "total {total} outside 0..={MAX_TOTAL}")
            }
            GoldViolation::TotalMismatch { total, sum } => {
                write!(f, "total {total} does not equal trait sum {sum}")
            }
        }
    }
}

/// Returns every violated invariant, not only the first.
pub fn validate_gold(v: &TraitScoreVector) -> Result<(), Vec<GoldViolation>> {
    let mut violations = Vec::new();
    for t in Trait::ALL {
        let value = v.get(t);
        if !t.in_range(i64::from(value)) {
            violations.push(GoldViolation::OutOfRange { trait_: t, value });
        }
    }
    if v.total > MAX_TOTAL {
        violations.push(GoldViolation::TotalOutOfRange { total: v.total });
    }
    if u32::from(v.total) != v.sum() {
        violations.push(GoldViolation::TotalMismatch {
            total: v.total,
            sum: v.sum(),
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Essay {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    pub gold: Option<TraitScoreVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Essay>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.utf8_error()),
        )
    })?;
    parse_corpus(&text, format)
}

pub fn parse_corpus(text: &str, format: CorpusFormat) -> Result<Vec<Essay>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rows = match format {
        CorpusFormat::Csv => csv_rows(text)?,
        CorpusFormat::Jsonl => jsonl_rows(text)?,
    };
    let mut seen = HashSet::new();
    let mut essays = Vec::with_capacity(rows.len());
    for (row, raw) in rows {
        let essay = raw.into_essay(row)?;
        if !seen.insert(essay.id.clone()) {
            return Err(Error::DuplicateId { row, id: essay.id });
        }
        essays.push(essay);
    }
    Ok(essays)
}

/// One row before validation: identifiers plus the eight score cells.
struct RawRow {
    id: String,
    prompt_id: String,
    text: String,
    scores: [Option<i64>; 8],
}

impl RawRow {
    fn into_essay(self, row: usize) -> Result<Essay> {
        let bad = |field: &str, message: &str| Error::MalformedRow {
            row,
            field: field.to_string(),
            message: message.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(bad("essay_id", "empty essay id"));
        }
        if self.text.trim().is_empty() {
            return Err(bad("text", "empty essay text"));
        }
        let present = self.scores.iter().filter(|s| s.is_some()).count();
        let gold = match present {
            0 => None,
            8 => {
                let mut values = [0u8; 8];
                for (i, cell) in self.scores.iter().enumerate() {
                    let field = CSV_HEADER[3 + i];
                    let v = cell.unwrap_or_default();
                    values[i] = u8::try_from(v)
                        .map_err(|_| bad(field, &format!("score {v} out of range")))?;
                }
                let mut scores = [0u8; 7];
                scores.copy_from_slice(&values[..7]);
                let v = TraitScoreVector::with_total(scores, values[7]);
                if let Err(violations) = validate_gold(&v) {
                    let first = &violations[0];
                    return Err(bad(first.field(), &first.to_string()));
                }
                Some(v)
            }
            _ => {
                let missing = self
                    .scores
                    .iter()
                    .position(|s| s.is_none())
                    .map(|i| CSV_HEADER[3 + i])
                    .unwrap_or("total");
                return Err(bad(missing, "partial gold annotation"));
            }
        };
        Ok(Essay {
            id: self.id,
            prompt_id: self.prompt_id,
            text: self.text,
            gold,
        })
    }
}

fn csv_rows(text: &str) -> Result<Vec<(usize, RawRow)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            row: 0,
            field: "header".to_string(),
            message: format!("expected `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |j: usize| record.get(j).unwrap_or("").to_string();
        let mut scores = [None; 8];
        for (k, slot) in scores.iter_mut().enumerate() {
            let field = CSV_HEADER[3 + k];
            let raw = cell(3 + k);
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            if !raw.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::MalformedRow {
                    row,
                    field: field.to_string(),
                    message: format!("`{raw}` is not a decimal integer"),
                });
            }
            *slot = Some(raw.parse::<i64>().map_err(|e| Error::MalformedRow {
                row,
                field: field.to_string(),
                message: e.to_string(),
            })?);
        }
        rows.push((
            row,
            RawRow {
                id: cell(0),
                prompt_id: cell(1),
                text: cell(2),
                scores,
            },
        ));
    }
    Ok(rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    essay_id: String,
    #[serde(default)]
    prompt_id: String,
    text: String,
    organization: Option<i64>,
    vocabulary: Option<i64>,
    style: Option<i64>,
    development: Option<i64>,
    mechanics: Option<i64>,
    structure: Option<i64>,
    relevance: Option<i64>,
    total: Option<i64>,
}

fn jsonl_rows(text: &str) -> Result<Vec<(usize, RawRow)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonRow = serde_json::from_str(line).map_err(|e| Error::MalformedRow {
            row,
            field: json_error_field(&e),
            message: e.to_string(),
        })?;
        rows.push((
            row,
            RawRow {
                id: r.essay_id,
                prompt_id: r.prompt_id,
                text: r.text,
                scores: [
                    r.organization,
                    r.vocabulary,
                    r.style,
                    r.development,
                    r.mechanics,
                    r.structure,
                    r.relevance,
                    r.total,
                ],
            },
        ));
    }
    Ok(rows)
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    CSV_HEADER
        .iter()
        .find(|f| msg.contains(&format!("`{f}`")))
        .map(|f| f.to_string())
        .unwrap_or_else(|| "<object>".to_string())
}

pub fn write_corpus<W: Write>(essays: &[Essay], format: CorpusFormat, out: W) -> Result<()> {
    match format {
        CorpusFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for e in essays {
                let mut record = vec![e.id.clone(), e.prompt_id.clone(), e.text.clone()];
                match &e.gold {
                    Some(g) => {
                        record.extend(g.scores().iter().map(u8::to_string));
                        record.push(g.total.to_string());
                    }
                    None => record.extend(std::iter::repeat_n(String::new(), 8)),
                }
                w.write_record(&record)?;
            }
            w.flush().map_err(|e| Error::io(Path::new("<corpus>"), e))?;
        }
        CorpusFormat::Jsonl => {
            let mut out = out;
            for e in essays {
                let mut obj = serde_json::Map::new();
                obj.insert("essay_id".into(), e.id.clone().into());
                obj.insert("prompt_id".into(), e.prompt_id.clone().into());
                obj.insert("text".into(), e.text.clone().into());
                if let Some(g) = &e.gold {
                    for t in Trait::ALL {
                        obj.insert(t.key().into(), g.get(t).into());
                    }
                    obj.insert("total".into(), g.total.into());
                }
                serde_json::to_writer(&mut out, &obj)?;
                out.write_all(b"\n")
                    .map_err(|e| Error::io(Path::new("<corpus>"), e))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "essay_id,prompt_id,text,organization,vocabulary,style,development,mechanics,structure,relevance,total\n";

    fn csv(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn loads_sample_row() {
        let essays = parse_corpus(
            &csv(&["3,p1,نص المقال,5,4,4,4,4,4,2,27"]),
            CorpusFormat::Csv,
        )
        .unwrap();
        assert_eq!(essays.len(), 1);
        assert_eq!(essays[0].gold.unwrap().total, 27);
        assert_eq!(essays[0].gold.unwrap().organization, 5);
    }

    #[test]
    fn zero_row_is_valid() {
        let essays = parse_corpus(&csv(&["z,p1,text,0,0,0,0,0,0,0,0"]), CorpusFormat::Csv).unwrap();
        assert_eq!(essays[0].gold, Some(TraitScoreVector::zeros()));
    }

    #[test]
    fn relevance_out_of_range() {
        let err =
            parse_corpus(&csv(&["x,p1,text,4,4,4,4,4,4,3,27"]), CorpusFormat::Csv).unwrap_err();
        match err {
            Error::MalformedRow { row, field, .. } => {
                assert_eq!(row, 1);
                assert_eq!(field, "relevance");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_id_and_row_number() {
        let err = parse_corpus(
            &csv(&["a,p,t,0,0,0,0,0,0,0,0", "a,p,t,0,0,0,0,0,0,0,0"]),
            CorpusFormat::Csv,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { row: 2, .. }));

        let err = parse_corpus(
            &csv(&["a,p,t,0,0,0,0,0,0,0,0", "b,p,t,1,x,0,0,0,0,0,1"]),
            CorpusFormat::Csv,
        )
        .unwrap_err();
        assert!(
            matches!(&err, Error::MalformedRow { row: 2, field, .. } if field == "vocabulary"),
            "{err}"
        );
    }

    #[test]
    fn unlabeled_and_partial() {
        let essays = parse_corpus(&csv(&["u,p,text,,,,,,,,"]), CorpusFormat::Csv).unwrap();
        assert_eq!(essays[0].gold, None);
        let err = parse_corpus(&csv(&["u,p,text,1,,,,,,,"]), CorpusFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { .. }));
    }

    #[test]
    fn empty_text_rejected() {
        let err = parse_corpus(&csv(&["u,p,\"   \",,,,,,,,"]), CorpusFormat::Csv).unwrap_err();
        assert!(matches!(&err, Error::MalformedRow { field, .. } if field == "text"));
    }

    #[test]
    fn bom_is_stripped() {
        let text = format!("\u{feff}{}", csv(&["a,p,t,0,0,0,0,0,0,0,0"]));
        assert_eq!(parse_corpus(&text, CorpusFormat::Csv).unwrap().len(), 1);
        let jsonl = "\u{feff}{\"essay_id\":\"a\",\"prompt_id\":\"p\",\"text\":\"t\"}\n";
        assert_eq!(parse_corpus(jsonl, CorpusFormat::Jsonl).unwrap().len(), 1);
    }

    #[test]
    fn jsonl_errors_name_row_and_field() {
        let jsonl = "{\"essay_id\":\"a\",\"text\":\"t\"}\n{\"essay_id\":\"b\",\"text\":\"t\",\"organization\":\"x\"}\n";
        let err = parse_corpus(jsonl, CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn validate_gold_reports_all_violations() {
        let ok = TraitScoreVector::with_total([4, 4, 4, 4, 4, 4, 2], 26);
        assert!(validate_gold(&ok).is_ok());
        let max = TraitScoreVector::with_total([5, 5, 5, 5, 5, 5, 2], 32);
        assert!(validate_gold(&max).is_ok());
        let off = TraitScoreVector::with_total([4, 4, 4, 4, 4, 4, 2], 27);
        assert_eq!(
            validate_gold(&off).unwrap_err(),
            vec![GoldViolation::TotalMismatch { total: 27, sum: 26 }]
        );
        let many = TraitScoreVector::with_total([6, 4, 4, 4, 4, 4, 3], 40);
        assert_eq!(validate_gold(&many).unwrap_err().len(), 4);
    }
}
