//! Clue-expression causal extraction.
//!
//! Each sentence of an explanation text is scanned for clue expressions.
//! The winning clue (lowest priority number, earliest position on ties)
//! splits the sentence into a cause and an effect expression:
//!
//! * infix clue mid-sentence: cause before the clue, effect after it;
//! * infix clue opening the sentence (`Due to X, Y.`): cause up to the first
//!   comma, effect after it;
//! * leading clue opening the sentence (`For this reason, Y.`): cause is the
//!   previous sentence of the same record, effect is the rest of the
//!   sentence. Mid-sentence occurrences of a leading clue split like infix.
//!
//! Matching is literal and case-sensitive. Surfaces may carry significant
//! leading or trailing spaces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SurveyRecord;

pub const CLUES_EN_TSV: &str = include_str!("../data/clues_en.tsv");
pub const CLUES_JA_TSV: &str = include_str!("../data/clues_ja.tsv");

pub const PAIRS_HEADER: [&str; 7] = [
    "pair_id",
    "record_id",
    "date",
    "topic",
    "clue",
    "cause",
    "effect",
];

const SENTENCE_TERMINATORS_FULLWIDTH: [char; 4] = ['。', '．', '！', '？'];
const SENTENCE_TERMINATORS_ASCII: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 8] = ['」', '』', '）', ')', '"', '\'', '”', '’'];
const COMMAS: [char; 3] = [',', '、', '，'];
const DANGLING: &str = ",.;:!?、。，．；：！？「」『』()（）\"'“”‘’・";

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("clue table is empty")]
    EmptyTable,
    #[error("clue table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Infix,
    Leading,
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "infix" => Ok(Self::Infix),
            "leading" => Ok(Self::Leading),
            other => Err(format!("unknown placement `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CluePattern {
    pub surface: String,
    pub placement: Placement,
    pub priority: i64,
}

/// A validated, priority-sorted list of clue patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClueTable {
    patterns: Vec<CluePattern>,
}

impl ClueTable {
    pub fn new(mut patterns: Vec<CluePattern>) -> Result<Self, ExtractionError> {
        if patterns.is_empty() {
            return Err(ExtractionError::EmptyTable);
        }
        patterns.sort_by_key(|p| p.priority);
        for (i, p) in patterns.iter().enumerate() {
            if p.surface.trim().is_empty() {
                return Err(ExtractionError::Table {
                    line: i + 1,
                    message: "empty clue surface".into(),
                });
            }
            if i > 0 && patterns[i - 1].priority == p.priority {
                return Err(ExtractionError::Table {
                    line: i + 1,
                    message: format!("duplicate priority {}", p.priority),
                });
            }
        }
        Ok(Self { patterns })
    }

    /// Parse the `surface<TAB>placement<TAB>priority` format. Lines that are
    /// blank or start with `#` are skipped; surfaces are taken verbatim.
    pub fn parse_tsv(text: &str) -> Result<Self, ExtractionError> {
        let mut patterns = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            let raw = if line == 1 {
                raw.trim_start_matches('\u{feff}')
            } else {
                raw
            };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 3 {
                return Err(ExtractionError::Table {
                    line,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let placement = cols[1]
                .parse()
                .map_err(|message| ExtractionError::Table { line, message })?;
            let priority = cols[2].trim().parse().map_err(|_| ExtractionError::Table {
                line,
                message: format!("invalid priority `{}`", cols[2]),
            })?;
            patterns.push(CluePattern {
                surface: cols[0].to_string(),
                placement,
                priority,
            });
        }
        Self::new(patterns)
    }

    pub fn load(path: &Path) -> Result<Self, ExtractionError> {
        let text = fs::read_to_string(path).map_err(|source| ExtractionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tsv(&text)
    }

    pub fn english() -> Self {
        Self::parse_tsv(CLUES_EN_TSV).expect("bundled English clue table is valid")
    }

    pub fn japanese() -> Self {
        Self::parse_tsv(CLUES_JA_TSV).expect("bundled Japanese clue table is valid")
    }

    pub fn patterns(&self) -> &[CluePattern] {
        &self.patterns
    }

    /// Highest-priority clue occurring in `sentence`, with its byte offset.
    fn best_match<'a>(&'a self, sentence: &str) -> Option<(&'a CluePattern, usize)> {
        // patterns are sorted by unique priority, so the first hit wins
        self.patterns
            .iter()
            .find_map(|p| sentence.find(&p.surface).map(|pos| (p, pos)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalPair {
    pub id: u64,
    pub record_id: u64,
    pub topic: String,
    pub date: NaiveDate,
    pub cause: String,
    pub effect: String,
    pub clue: String,
}

/// Split text into trimmed sentences.
///
/// Full-width terminators always end a sentence. ASCII terminators end one
/// only when followed by whitespace or end of text, so decimals such as
/// `3.5%` stay intact. Closing quotes and brackets right after a terminator
/// stay with the sentence they close.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        let fullwidth = SENTENCE_TERMINATORS_FULLWIDTH.contains(&c);
        if !fullwidth && !SENTENCE_TERMINATORS_ASCII.contains(&c) {
            continue;
        }
        let mut end = text.len();
        let mut any_fullwidth = fullwidth;
        while let Some(&(i, next)) = chars.peek() {
            if SENTENCE_TERMINATORS_FULLWIDTH.contains(&next) {
                any_fullwidth = true;
            } else if !SENTENCE_TERMINATORS_ASCII.contains(&next) && !CLOSERS.contains(&next) {
                end = i;
                break;
            }
            chars.next();
        }
        let at_boundary = end == text.len() || text[end..].starts_with(char::is_whitespace);
        if any_fullwidth || at_boundary {
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

fn trim_expression(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || DANGLING.contains(c))
}

/// Cause and effect for one sentence, before pair ids are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSplit<'a> {
    pub sentence_index: usize,
    pub clue: &'a str,
    pub cause: &'a str,
    pub effect: &'a str,
}

/// Apply the clue rules to every sentence of `text`.
pub fn split_text<'t, 'c>(text: &'t str, clues: &'c ClueTable) -> Vec<SentenceSplit<'t>>
where
    'c: 't,
{
    let sentences = split_sentences(text);
    let mut out = Vec::new();
    for (i, sentence) in sentences.iter().enumerate() {
        let Some((clue, pos)) = clues.best_match(sentence) else {
            continue;
        };
        let after = &sentence[pos + clue.surface.len()..];
        let (cause, effect) = if pos == 0 && clue.placement == Placement::Leading {
            let Some(prev) = i.checked_sub(1).map(|j| sentences[j]) else {
                continue;
            };
            (prev, after)
        } else if pos == 0 {
            let Some(comma) = after.find(COMMAS) else {
                continue;
            };
            let comma_len = after[comma..].chars().next().map_or(1, char::len_utf8);
            (&after[..comma], &after[comma + comma_len..])
        } else {
            (&sentence[..pos], after)
        };
        let (cause, effect) = (trim_expression(cause), trim_expression(effect));
        if cause.is_empty() || effect.is_empty() {
            continue;
        }
        if cause.contains(clue.surface.as_str()) || effect.contains(clue.surface.as_str()) {
            continue;
        }
        out.push(SentenceSplit {
            sentence_index: i,
            clue: clue.surface.as_str(),
            cause,
            effect,
        });
    }
    out
}

/// Extract pairs from one record. Ids are numbered from `first_id`.
pub fn extract_pairs(record: &SurveyRecord, clues: &ClueTable, first_id: u64) -> Vec<CausalPair> {
    split_text(&record.text, clues)
        .into_iter()
        .enumerate()
        .map(|(n, s)| CausalPair {
            id: first_id + n as u64,
            record_id: record.id,
            topic: record.topic.clone(),
            date: record.date,
            cause: s.cause.to_string(),
            effect: s.effect.to_string(),
            clue: s.clue.to_string(),
        })
        .collect()
}

/// Build the causal information database for a whole corpus.
///
/// Pair ids start at 1 and follow (record id, sentence index) order
/// regardless of how the work is scheduled.
pub fn extract_all(records: &[SurveyRecord], clues: &ClueTable) -> Vec<CausalPair> {
    let per_record: Vec<Vec<CausalPair>> = records
        .par_iter()
        .map(|r| extract_pairs(r, clues, 0))
        .collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].id);
    let mut out = Vec::new();
    for i in order {
        for mut pair in per_record[i].iter().cloned() {
            pair.id = out.len() as u64 + 1;
            out.push(pair);
        }
    }
    out
}

pub fn write_pairs<W: Write>(pairs: &[CausalPair], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIRS_HEADER)?;
    for p in pairs {
        w.write_record([
            p.id.to_string().as_str(),
            &p.record_id.to_string(),
            &p.date.format("%Y-%m-%d").to_string(),
            &p.topic,
            &p.clue,
            &p.cause,
            &p.effect,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<CausalPair>, ExtractionError> {
    let csv_err = |source| ExtractionError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::None)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(PAIRS_HEADER) {
        return Err(ExtractionError::Row {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| ExtractionError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = row[0]
            .parse()
            .map_err(|_| bad(format!("invalid pair_id `{}`", &row[0])))?;
        let record_id = row[1]
            .parse()
            .map_err(|_| bad(format!("invalid record_id `{}`", &row[1])))?;
        let date = NaiveDate::parse_from_str(&row[2], "%Y-%m-%d")
            .map_err(|_| bad(format!("invalid date `{}`", &row[2])))?;
        out.push(CausalPair {
            id,
            record_id,
            date,
            topic: row[3].to_string(),
            clue: row[4].to_string(),
            cause: row[5].to_string(),
            effect: row[6].to_string(),
        });
    }
    Ok(out)
}
