//! Cross-topic causal chains.
//!
//! A chain links an earlier pair (front, topic A) to a later pair (rear,
//! topic B ≠ A) when the front's effect expression and the rear's cause
//! expression are more similar than the threshold.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TopicPair;
use crate::embedding::{cosine_with_norms, EmbeddingError, Vector};
use crate::extraction::CausalPair;
use crate::month::Month;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub const CHAINS_HEADER: [&str; 8] = [
    "front_pair_id",
    "rear_pair_id",
    "front_topic",
    "rear_topic",
    "front_date",
    "rear_date",
    "lag_days",
    "similarity",
];

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("threshold {0} is outside (0, 1]")]
    Threshold(f64),
    #[error("no vectors for pair {pair_id}")]
    MissingVector { pair_id: u64 },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalChain {
    pub front: u64,
    pub rear: u64,
    pub front_topic: String,
    pub rear_topic: String,
    pub front_date: NaiveDate,
    pub rear_date: NaiveDate,
    pub lag_days: i64,
    pub similarity: f64,
}

impl CausalChain {
    pub fn topic_pair(&self) -> TopicPair {
        TopicPair::new(self.front_topic.clone(), self.rear_topic.clone())
    }

    /// Month the chain is attributed to (the rear event's month).
    pub fn month(&self) -> Month {
        Month::of(self.rear_date)
    }
}

/// Effect and cause vectors of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVectors {
    pub cause: Vector,
    pub effect: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub threshold: f64,
    /// Maximum calendar-month distance between front and rear; `None` = unbounded.
    pub window_months: Option<u32>,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            window_months: None,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.threshold > 0.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(ChainError::Threshold(self.threshold))
        }
    }

    fn admits(&self, front: &CausalPair, rear: &CausalPair) -> bool {
        if front.date >= rear.date || front.topic == rear.topic {
            return false;
        }
        match self.window_months {
            Some(w) => Month::of(front.date).months_until(Month::of(rear.date)) <= w as i64,
            None => true,
        }
    }
}

/// Link every admissible (front, rear) combination whose similarity exceeds
/// the threshold. Output is sorted by (rear id, front id).
pub fn build_chains(
    pairs: &[CausalPair],
    vectors: &HashMap<u64, PairVectors>,
    params: &ChainParams,
) -> Result<Vec<CausalChain>, ChainError> {
    params.validate()?;
    let mut norms: HashMap<u64, (f64, f64)> = HashMap::with_capacity(pairs.len());
    let mut dim = None;
    for p in pairs {
        let v = vectors
            .get(&p.id)
            .ok_or(ChainError::MissingVector { pair_id: p.id })?;
        let expected = *dim.get_or_insert(v.cause.dim());
        for side in [&v.cause, &v.effect] {
            if side.dim() != expected {
                return Err(EmbeddingError::DimensionMismatch {
                    expected,
                    found: side.dim(),
                }
                .into());
            }
        }
        norms.insert(p.id, (v.cause.norm(), v.effect.norm()));
    }

    let mut by_topic: BTreeMap<&str, Vec<&CausalPair>> = BTreeMap::new();
    for p in pairs {
        by_topic.entry(p.topic.as_str()).or_default().push(p);
    }
    let topics: Vec<&str> = by_topic.keys().copied().collect();
    let tasks: Vec<(&str, &str)> = topics
        .iter()
        .flat_map(|&a| {
            topics
                .iter()
                .filter(move |&&b| b != a)
                .map(move |&b| (a, b))
        })
        .collect();

    let per_task: Vec<Vec<CausalChain>> = tasks
        .par_iter()
        .map(|&(front_topic, rear_topic)| {
            let mut out = Vec::new();
            for rear in &by_topic[rear_topic] {
                let rear_cause = &vectors[&rear.id].cause;
                let rear_norm = norms[&rear.id].0;
                for front in &by_topic[front_topic] {
                    if !params.admits(front, rear) {
                        continue;
                    }
                    let similarity = cosine_with_norms(
                        &vectors[&front.id].effect,
                        norms[&front.id].1,
                        rear_cause,
                        rear_norm,
                    );
                    if similarity > params.threshold {
                        out.push(link(front, rear, similarity));
                    }
                }
            }
            out
        })
        .collect();

    let mut chains: Vec<CausalChain> = per_task.into_iter().flatten().collect();
    chains.sort_by_key(|c| (c.rear, c.front));
    Ok(chains)
}

fn link(front: &CausalPair, rear: &CausalPair, similarity: f64) -> CausalChain {
    CausalChain {
        front: front.id,
        rear: rear.id,
        front_topic: front.topic.clone(),
        rear_topic: rear.topic.clone(),
        front_date: front.date,
        rear_date: rear.date,
        lag_days: (rear.date - front.date).num_days(),
        similarity,
    }
}

/// Number of chains per ordered topic pair. Absent pairs have count 0.
pub fn chain_counts(chains: &[CausalChain]) -> BTreeMap<TopicPair, usize> {
    let mut out = BTreeMap::new();
    for c in chains {
        *out.entry(c.topic_pair()).or_insert(0) += 1;
    }
    out
}

pub fn write_chains<W: Write>(chains: &[CausalChain], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CHAINS_HEADER)?;
    for c in chains {
        w.write_record([
            c.front.to_string().as_str(),
            &c.rear.to_string(),
            &c.front_topic,
            &c.rear_topic,
            &c.front_date.format("%Y-%m-%d").to_string(),
            &c.rear_date.format("%Y-%m-%d").to_string(),
            &c.lag_days.to_string(),
            &c.similarity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chains(path: &Path) -> Result<Vec<CausalChain>, ChainError> {
    let csv_err = |source| ChainError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CHAINS_HEADER) {
        return Err(ChainError::Row {
            path: path.to_path_buf(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |col: &str| ChainError::Row {
            path: path.to_path_buf(),
            line,
            message: format!("invalid {col}"),
        };
        let date = |i: usize, col: &str| {
            NaiveDate::parse_from_str(&row[i], "%Y-%m-%d").map_err(|_| bad(col))
        };
        out.push(CausalChain {
            front: row[0].parse().map_err(|_| bad("front_pair_id"))?,
            rear: row[1].parse().map_err(|_| bad("rear_pair_id"))?,
            front_topic: row[2].to_string(),
            rear_topic: row[3].to_string(),
            front_date: date(4, "front_date")?,
            rear_date: date(5, "rear_date")?,
            lag_days: row[6].parse().map_err(|_| bad("lag_days"))?,
            similarity: row[7].parse().map_err(|_| bad("similarity"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::BuiltinProvider;

    fn pair(id: u64, topic: &str, date: (i32, u32, u32), cause: &str, effect: &str) -> CausalPair {
        CausalPair {
            id,
            record_id: id,
            topic: topic.into(),
            date: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            cause: cause.into(),
            effect: effect.into(),
            clue: "Due to ".into(),
        }
    }

    fn embed(pairs: &[CausalPair]) -> HashMap<u64, PairVectors> {
        let p = BuiltinProvider::default();
        pairs
            .iter()
            .map(|x| {
                (
                    x.id,
                    PairVectors {
                        cause: p.embed_one(&x.cause),
                        effect: p.embed_one(&x.effect),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn identical_text_links() {
        let pairs = [
            pair(
                1,
                "Job Offer Movement",
                (2012, 1, 10),
                "x",
                "hiring slowed down sharply",
            ),
            pair(
                2,
                "Sales Volume Movement",
                (2012, 3, 2),
                "hiring slowed down sharply",
                "y",
            ),
        ];
        let chains = build_chains(&pairs, &embed(&pairs), &ChainParams::default()).unwrap();
        assert_eq!(chains.len(), 1);
        let c = &chains[0];
        assert_eq!((c.front, c.rear), (1, 2));
        assert!((c.similarity - 1.0).abs() < 1e-12);
        assert_eq!(c.lag_days, 52);
        assert_eq!(
            c.topic_pair().label(),
            "Job Offer Movement->Sales Volume Movement"
        );
    }

    #[test]
    fn same_day_and_same_topic_do_not_link() {
        let same_day = [
            pair(1, "A", (2012, 1, 10), "x", "shared text"),
            pair(2, "B", (2012, 1, 10), "shared text", "y"),
        ];
        assert!(
            build_chains(&same_day, &embed(&same_day), &ChainParams::default())
                .unwrap()
                .is_empty()
        );
        let same_topic = [
            pair(1, "A", (2012, 1, 10), "x", "shared text"),
            pair(2, "A", (2012, 2, 10), "shared text", "y"),
        ];
        assert!(
            build_chains(&same_topic, &embed(&same_topic), &ChainParams::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn threshold_is_strict() {
        let pairs = [
            pair(1, "A", (2012, 1, 10), "x", "shared text"),
            pair(2, "B", (2012, 2, 10), "shared text", "y"),
        ];
        let at_one = ChainParams {
            threshold: 1.0,
            window_months: None,
        };
        // similarity rounds to exactly 1.0 or just below; either way not > 1.0
        assert!(build_chains(&pairs, &embed(&pairs), &at_one)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn window_caps_lag() {
        let pairs = [
            pair(1, "A", (2012, 1, 10), "x", "shared text"),
            pair(2, "B", (2012, 4, 1), "shared text", "y"),
        ];
        let v = embed(&pairs);
        let within = |w| ChainParams {
            threshold: 0.5,
            window_months: Some(w),
        };
        assert!(build_chains(&pairs, &v, &within(2)).unwrap().is_empty());
        assert_eq!(build_chains(&pairs, &v, &within(3)).unwrap().len(), 1);
    }

    #[test]
    fn errors() {
        let pairs = [pair(1, "A", (2012, 1, 10), "x", "y")];
        assert!(matches!(
            build_chains(&pairs, &HashMap::new(), &ChainParams::default()),
            Err(ChainError::MissingVector { pair_id: 1, .. })
        ));
        for t in [0.0, -0.1, 1.5, f64::NAN] {
            let p = ChainParams {
                threshold: t,
                window_months: None,
            };
            assert!(matches!(
                build_chains(&pairs, &embed(&pairs), &p),
                Err(ChainError::Threshold(_))
            ));
        }
    }

    #[test]
    fn counts() {
        assert!(chain_counts(&[]).is_empty());
        let mk = |f: &str, r: &str| CausalChain {
            front: 1,
            rear: 2,
            front_topic: f.into(),
            rear_topic: r.into(),
            front_date: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
            rear_date: NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(),
            lag_days: 1,
            similarity: 0.9,
        };
        let chains = [mk("A", "B"), mk("A", "B"), mk("B", "A"), mk("A", "B")];
        let counts = chain_counts(&chains);
        assert_eq!(counts[&TopicPair::new("A", "B")], 3);
        assert_eq!(counts[&TopicPair::new("B", "A")], 1);
        assert_eq!(counts.get(&TopicPair::new("A", "C")), None);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pairs = [
            pair(
                1,
                "A, with comma",
                (2012, 1, 10),
                "x",
                "prices of fresh food rose",
            ),
            pair(
                2,
                "B",
                (2012, 2, 10),
                "prices of fresh food rose again",
                "y",
            ),
        ];
        let chains = build_chains(&pairs, &embed(&pairs), &ChainParams::default()).unwrap();
        assert_eq!(chains.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chains.csv");
        write_chains(&chains, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(read_chains(&path).unwrap(), chains);
    }
}
