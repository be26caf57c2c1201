//! Survey records and the topic vocabulary.
//!
//! The corpus file is UTF-8 CSV with header `date,topic,condition,text`.
//! Dates are `YYYY-MM-DD` or `YYYY-MM` (normalized to the first of the
//! month). Condition marks are kept for provenance only; nothing downstream
//! reads them.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::month::Month;

/// The thirteen judgment-reason categories of the Economy Watchers Survey,
/// in canonical order.
pub const DEFAULT_TOPICS: [&str; 13] = [
    "Competitor Behavior",
    "Customer Behavior",
    "Employment Form Movement",
    "Job Offer Movement",
    "Job Seeker Movement",
    "Neighboring Company Behavior",
    "Number of Hires",
    "Number of Visitors",
    "Order & Sales Price Movement",
    "Order & Sales Volume Movement",
    "Sales Volume Movement",
    "Trading Partner Behavior",
    "Unit Price Movement",
];

pub const CORPUS_HEADER: [&str; 4] = ["date", "topic", "condition", "text"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
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
    #[error("{path}: header must be `date,topic,condition,text`, found `{found}`")]
    Header { path: PathBuf, found: String },
    #[error("{path} line {line}: expected 4 columns, found {found}")]
    ColumnCount {
        path: PathBuf,
        line: u64,
        found: usize,
    },
    #[error("{path} line {line}: invalid date `{value}`")]
    InvalidDate {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("{path} line {line}: invalid condition mark `{value}`")]
    InvalidCondition {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("{path} line {line}: empty explanation text")]
    EmptyText { path: PathBuf, line: u64 },
    #[error("{path} line {line}: unknown topic `{topic}`")]
    UnknownTopic {
        path: PathBuf,
        line: u64,
        topic: String,
    },
    #[error("topic vocabulary: {0}")]
    Vocabulary(String),
}

/// Five-point rating attached to each survey response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    MuchBetter,
    Better,
    Unchanged,
    Worse,
    MuchWorse,
}

impl Condition {
    pub fn from_mark(mark: &str) -> Option<Self> {
        match mark {
            "◎" => Some(Self::MuchBetter),
            "○" => Some(Self::Better),
            "□" => Some(Self::Unchanged),
            "▲" => Some(Self::Worse),
            "×" => Some(Self::MuchWorse),
            _ => None,
        }
    }

    pub fn mark(self) -> &'static str {
        match self {
            Self::MuchBetter => "◎",
            Self::Better => "○",
            Self::Unchanged => "□",
            Self::Worse => "▲",
            Self::MuchWorse => "×",
        }
    }
}

/// Ordered, duplicate-free list of topic names. The order is the row and
/// column order of every downstream matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicVocabulary {
    topics: Vec<String>,
}

impl TopicVocabulary {
    pub fn new<I, S>(topics: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in topics {
            let t: String = t.into();
            let t = t.trim().to_string();
            if t.is_empty() {
                return Err(CorpusError::Vocabulary("empty topic name".into()));
            }
            if t.contains("->") {
                return Err(CorpusError::Vocabulary(format!(
                    "topic `{t}` contains the reserved separator `->`"
                )));
            }
            if !seen.insert(t.clone()) {
                return Err(CorpusError::Vocabulary(format!("duplicate topic `{t}`")));
            }
            out.push(t);
        }
        Ok(Self { topics: out })
    }

    pub fn default_thirteen() -> Self {
        Self::new(DEFAULT_TOPICS).expect("default vocabulary is valid")
    }

    /// Parse the one-topic-per-line format. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        Self::new(
            text.lines()
                .map(|l| l.trim_start_matches('\u{feff}').trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn position(&self, topic: &str) -> Option<usize> {
        self.topics.iter().position(|t| t == topic)
    }

    pub fn contains(&self, topic: &str) -> bool {
        self.position(topic).is_some()
    }

    /// All ordered pairs of distinct topics, front-major in vocabulary order.
    pub fn ordered_pairs(&self) -> Vec<TopicPair> {
        let mut out = Vec::with_capacity(self.len() * self.len().saturating_sub(1));
        for front in &self.topics {
            for rear in &self.topics {
                if front != rear {
                    out.push(TopicPair::new(front.clone(), rear.clone()));
                }
            }
        }
        out
    }
}

/// Ordered (front, rear) topic pair; written as `FRONT->REAR`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TopicPair {
    pub front: String,
    pub rear: String,
}

impl TopicPair {
    pub fn new(front: impl Into<String>, rear: impl Into<String>) -> Self {
        Self {
            front: front.into(),
            rear: rear.into(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}->{}", self.front, self.rear)
    }

    pub fn parse_label(label: &str) -> Option<Self> {
        let (front, rear) = label.split_once("->")?;
        (!front.is_empty() && !rear.is_empty()).then(|| Self::new(front, rear))
    }
}

impl fmt::Display for TopicPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.front, self.rear)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub id: u64,
    pub date: NaiveDate,
    pub topic: String,
    pub condition: Option<Condition>,
    pub text: String,
}

impl SurveyRecord {
    pub fn month(&self) -> Month {
        Month::of(self.date)
    }
}

/// What to do with rows whose topic is not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadedCorpus {
    pub records: Vec<SurveyRecord>,
    pub data_rows: usize,
    /// Rows dropped for an unknown topic (lenient mode only).
    pub skipped: usize,
}

/// Parse `YYYY-MM-DD`, or `YYYY-MM` as the first of that month.
pub fn parse_date(value: &str) -> Option<NaiveDate> {
    let value = value.trim();
    match value.len() {
        10 => NaiveDate::parse_from_str(value, "%Y-%m-%d").ok(),
        7 => value.parse::<Month>().ok().map(Month::first_day),
        _ => None,
    }
}

pub fn load_corpus(
    path: &Path,
    vocabulary: &TopicVocabulary,
    mode: IngestMode,
) -> Result<LoadedCorpus, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&bytes, path, vocabulary, mode)
}

/// Parse corpus CSV bytes; `path` is used only in error messages.
pub fn parse_corpus(
    bytes: &[u8],
    path: &Path,
    vocabulary: &TopicVocabulary,
    mode: IngestMode,
) -> Result<LoadedCorpus, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let bytes = bytes.strip_prefix("\u{feff}".as_bytes()).unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(csv_err)?,
        None => return Ok(LoadedCorpus::default()),
    };
    if header.iter().map(str::trim).ne(CORPUS_HEADER) {
        return Err(CorpusError::Header {
            path: path.to_path_buf(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = LoadedCorpus::default();
    for row in rows {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        out.data_rows += 1;
        if row.len() != 4 {
            return Err(CorpusError::ColumnCount {
                path: path.to_path_buf(),
                line,
                found: row.len(),
            });
        }
        let date = parse_date(&row[0]).ok_or_else(|| CorpusError::InvalidDate {
            path: path.to_path_buf(),
            line,
            value: row[0].to_string(),
        })?;
        let topic = row[1].trim();
        if !vocabulary.contains(topic) {
            match mode {
                IngestMode::Strict => {
                    return Err(CorpusError::UnknownTopic {
                        path: path.to_path_buf(),
                        line,
                        topic: topic.to_string(),
                    })
                }
                IngestMode::Lenient => {
                    log::warn!(
                        "{} line {line}: skipping unknown topic `{topic}`",
                        path.display()
                    );
                    out.skipped += 1;
                    continue;
                }
            }
        }
        let mark = row[2].trim();
        let condition = if mark.is_empty() {
            None
        } else {
            Some(
                Condition::from_mark(mark).ok_or_else(|| CorpusError::InvalidCondition {
                    path: path.to_path_buf(),
                    line,
                    value: mark.to_string(),
                })?,
            )
        };
        let text = row[3].trim();
        if text.is_empty() {
            return Err(CorpusError::EmptyText {
                path: path.to_path_buf(),
                line,
            });
        }
        out.records.push(SurveyRecord {
            id: out.records.len() as u64 + 1,
            date,
            topic: topic.to_string(),
            condition,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Serialize records back to the corpus CSV format.
pub fn write_corpus<W: std::io::Write>(records: &[SurveyRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORPUS_HEADER)?;
    for r in records {
        let date = r.date.format("%Y-%m-%d").to_string();
        let mark = r.condition.map(Condition::mark).unwrap_or("");
        w.write_record([date.as_str(), &r.topic, mark, &r.text])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: IngestMode) -> Result<LoadedCorpus, CorpusError> {
        parse_corpus(
            text.as_bytes(),
            Path::new("corpus.csv"),
            &TopicVocabulary::default_thirteen(),
            mode,
        )
    }

    #[test]
    fn table_one_row_with_embedded_comma() {
        let csv = "date,topic,condition,text\n\
                   2010-03-05,Sales Volume Movement,×,\"Due to early demand for eco-point electronic goods, the sales volume has now slowed.\"\n";
        let loaded = parse(csv, IngestMode::Strict).unwrap();
        assert_eq!(loaded.records.len(), 1);
        let r = &loaded.records[0];
        assert_eq!(r.id, 1);
        assert_eq!(r.topic, "Sales Volume Movement");
        assert_eq!(r.condition, Some(Condition::MuchWorse));
        assert_eq!(r.date, NaiveDate::from_ymd_opt(2010, 3, 5).unwrap());
        assert!(r.text.starts_with("Due to early demand"));
        assert!(r.text.ends_with("has now slowed."));
    }

    #[test]
    fn header_only_is_empty() {
        let loaded = parse("date,topic,condition,text\n", IngestMode::Strict).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.data_rows, 0);
        assert!(parse("", IngestMode::Strict).unwrap().records.is_empty());
    }

    #[test]
    fn unknown_topic_strict_names_row_and_topic() {
        let csv = "date,topic,condition,text\n2011-01-04,Number of Visitors,,ok\n2011-01-05,Weather,○,Sunny.\n";
        let err = parse(csv, IngestMode::Strict).unwrap_err();
        match &err {
            CorpusError::UnknownTopic { line, topic, .. } => {
                assert_eq!(*line, 3);
                assert_eq!(topic, "Weather");
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err.to_string().contains("Weather"));
    }

    #[test]
    fn unknown_topic_lenient_is_counted() {
        let csv = "date,topic,condition,text\n2011-01-04,Weather,,a\n2011-01-05,Number of Visitors,,b\n2011-01-06,Weather,,c\n";
        let loaded = parse(csv, IngestMode::Lenient).unwrap();
        assert_eq!(loaded.data_rows, 3);
        assert_eq!(loaded.skipped, 2);
        assert_eq!(loaded.records.len(), loaded.data_rows - loaded.skipped);
        assert_eq!(loaded.records[0].id, 1);
        assert_eq!(loaded.records[0].text, "b");
    }

    #[test]
    fn month_precision_dates_normalize_to_first() {
        let csv = "date,topic,condition,text\n2012-07,Number of Hires,□,Flat.\n";
        let r = &parse(csv, IngestMode::Strict).unwrap().records[0];
        assert_eq!(r.date, NaiveDate::from_ymd_opt(2012, 7, 1).unwrap());
        assert_eq!(r.condition, Some(Condition::Unchanged));
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_date = "date,topic,condition,text\n2012-02-30,Number of Hires,,x\n";
        assert!(matches!(
            parse(bad_date, IngestMode::Strict),
            Err(CorpusError::InvalidDate { line: 2, .. })
        ));
        let short = "date,topic,condition,text\n2012-02-03,Number of Hires\n";
        assert!(matches!(
            parse(short, IngestMode::Strict),
            Err(CorpusError::ColumnCount { found: 2, .. })
        ));
        let blank = "date,topic,condition,text\n2012-02-03,Number of Hires,,   \n";
        assert!(matches!(
            parse(blank, IngestMode::Strict),
            Err(CorpusError::EmptyText { .. })
        ));
        let mark = "date,topic,condition,text\n2012-02-03,Number of Hires,?,x\n";
        assert!(matches!(
            parse(mark, IngestMode::Strict),
            Err(CorpusError::InvalidCondition { .. })
        ));
        let header = "when,topic,condition,text\n";
        assert!(matches!(
            parse(header, IngestMode::Strict),
            Err(CorpusError::Header { .. })
        ));
    }

    #[test]
    fn duplicates_are_retained() {
        let csv = "date,topic,condition,text\n2011-01-04,Number of Visitors,,same\n2011-01-04,Number of Visitors,,same\n";
        let loaded = parse(csv, IngestMode::Strict).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[1].id, 2);
    }

    #[test]
    fn vocabulary_rules() {
        assert_eq!(TopicVocabulary::default_thirteen().len(), 13);
        assert!(TopicVocabulary::new(["A", "B", "A"]).is_err());
        assert!(TopicVocabulary::new(["A->B"]).is_err());
        let v = TopicVocabulary::parse("B\n\nA\n").unwrap();
        assert_eq!(v.topics(), ["B", "A"]);
        let pairs: Vec<String> = v.ordered_pairs().iter().map(TopicPair::label).collect();
        assert_eq!(pairs, ["B->A", "A->B"]);
    }

    #[test]
    fn write_then_parse_is_stable() {
        let csv = "date,topic,condition,text\n2011-01-04,Number of Visitors,◎,\"a, b\"\n2011-02,Customer Behavior,,c\n";
        let first = parse(csv, IngestMode::Strict).unwrap();
        let mut buf = Vec::new();
        write_corpus(&first.records, &mut buf).unwrap();
        let second = parse(std::str::from_utf8(&buf).unwrap(), IngestMode::Strict).unwrap();
        assert_eq!(first, second);
    }
}
