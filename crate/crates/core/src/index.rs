//! Monthly narrative index per ordered topic pair.
//!
//! For month `m`, the index sums `w(d) * similarity` over every chain whose
//! rear event falls in `m`, where `w(d) = 1 / (1 + a * exp(b * d))` and `d`
//! is the front-to-rear lag.
//!
//! The lag unit defaults to months (`floor(days / 30.4375)`). With
//! `a = 0.02, b = 0.065` the weight halves at `d = ln(52) / 0.065 ≈ 60.8`,
//! i.e. after about five years when `d` is in months but after about two
//! months when `d` is in days. Days remain selectable.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::CausalChain;
use crate::corpus::{TopicPair, TopicVocabulary};
use crate::month::{Month, MonthRange, MonthSeries};
use crate::sum::CompensatedSum;

pub const DEFAULT_A: f64 = 0.02;
pub const DEFAULT_B: f64 = 0.065;
pub const DAYS_PER_MONTH: f64 = 30.4375;

/// Recorded in run manifests next to the decay parameters.
pub const LAG_UNIT_NOTE: &str = "decay lag is measured in months by default: with a=0.02, b=0.065 \
the weight halves at d = ln(52)/0.065 = 60.8, which is about five years in months but only about \
61 days if d is taken in days; lag_unit=days applies the formula to day differences literally";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("decay parameters must be strictly positive (a = {a}, b = {b})")]
    Params { a: f64, b: f64 },
    #[error("chain {front}->{rear} has non-positive lag {lag_days} days")]
    NonPositiveLag {
        front: u64,
        rear: u64,
        lag_days: i64,
    },
    #[error("chain {front}->{rear} belongs to {found}, expected {expected}")]
    WrongTopicPair {
        front: u64,
        rear: u64,
        found: String,
        expected: String,
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagUnit {
    #[default]
    Months,
    Days,
}

impl std::str::FromStr for LagUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "months" => Ok(Self::Months),
            "days" => Ok(Self::Days),
            other => Err(format!(
                "unknown lag unit `{other}` (expected months or days)"
            )),
        }
    }
}

impl std::fmt::Display for LagUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Months => "months",
            Self::Days => "days",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub a: f64,
    pub b: f64,
    pub lag_unit: LagUnit,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            a: DEFAULT_A,
            b: DEFAULT_B,
            lag_unit: LagUnit::Months,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(IndexError::Params {
                a: self.a,
                b: self.b,
            })
        }
    }

    /// Lag of `lag_days` expressed in this parameter set's unit.
    pub fn lag(&self, lag_days: i64) -> f64 {
        match self.lag_unit {
            LagUnit::Days => lag_days as f64,
            LagUnit::Months => (lag_days as f64 / DAYS_PER_MONTH).floor(),
        }
    }

    /// Lag at which the weight is half of `decay_weight(0)`.
    pub fn half_life(&self) -> f64 {
        ((1.0 + 2.0 * self.a) / self.a).ln() / self.b
    }
}

/// Logistic decay `1 / (1 + a e^{b d})` for `d >= 0`.
pub fn decay_weight(d: f64, params: &DecayParams) -> f64 {
    debug_assert!(d >= 0.0);
    1.0 / (1.0 + params.a * (params.b * d).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyIndexSeries {
    pub topic_pair: TopicPair,
    pub values: MonthSeries,
}

/// Index series for one topic pair over `range`. Months without chains are 0.
///
/// Chains outside `range` are ignored.
pub fn monthly_index(
    chains: &[&CausalChain],
    params: &DecayParams,
    topic_pair: &TopicPair,
    range: MonthRange,
) -> Result<MonthlyIndexSeries, IndexError> {
    params.validate()?;
    let mut acc: BTreeMap<Month, CompensatedSum> = range
        .months()
        .into_iter()
        .map(|m| (m, CompensatedSum::new()))
        .collect();
    for c in chains {
        if c.front_topic != topic_pair.front || c.rear_topic != topic_pair.rear {
            return Err(IndexError::WrongTopicPair {
                front: c.front,
                rear: c.rear,
                found: c.topic_pair().label(),
                expected: topic_pair.label(),
            });
        }
        if c.lag_days <= 0 {
            return Err(IndexError::NonPositiveLag {
                front: c.front,
                rear: c.rear,
                lag_days: c.lag_days,
            });
        }
        if let Some(slot) = acc.get_mut(&c.month()) {
            slot.add(decay_weight(params.lag(c.lag_days), params) * c.similarity);
        }
    }
    Ok(MonthlyIndexSeries {
        topic_pair: topic_pair.clone(),
        values: acc.into_iter().map(|(m, s)| (m, s.value())).collect(),
    })
}

/// One series per ordered pair of distinct vocabulary topics, front-major in
/// vocabulary order. Chains on topics outside the vocabulary are ignored.
pub fn build_all_series(
    chains: &[CausalChain],
    vocabulary: &TopicVocabulary,
    params: &DecayParams,
    range: MonthRange,
) -> Result<Vec<MonthlyIndexSeries>, IndexError> {
    params.validate()?;
    let mut grouped: BTreeMap<TopicPair, Vec<&CausalChain>> = BTreeMap::new();
    for c in chains {
        grouped.entry(c.topic_pair()).or_default().push(c);
    }
    vocabulary
        .ordered_pairs()
        .par_iter()
        .map(|tp| {
            let members = grouped.get(tp).map(Vec::as_slice).unwrap_or(&[]);
            monthly_index(members, params, tp, range)
        })
        .collect()
}

/// Write the wide index table: `month,FRONT->REAR,...`.
pub fn write_indices<W: Write>(series: &[MonthlyIndexSeries], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["month".to_string()];
    header.extend(series.iter().map(|s| s.topic_pair.label()));
    w.write_record(&header)?;
    let months: Vec<Month> = series
        .first()
        .map(|s| s.values.keys().copied().collect())
        .unwrap_or_default();
    for m in months {
        let mut row = vec![m.to_string()];
        row.extend(
            series
                .iter()
                .map(|s| s.values.get(&m).copied().unwrap_or(0.0).to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_indices(path: &Path) -> Result<Vec<MonthlyIndexSeries>, IndexError> {
    let csv_err = |source| IndexError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let row_err = |line: u64, message: String| IndexError::Row {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("month") {
        return Err(row_err(1, "first column must be `month`".into()));
    }
    let mut series = header
        .iter()
        .skip(1)
        .map(|label| {
            TopicPair::parse_label(label)
                .map(|topic_pair| MonthlyIndexSeries {
                    topic_pair,
                    values: MonthSeries::new(),
                })
                .ok_or_else(|| row_err(1, format!("invalid column `{label}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let month: Month = row[0].parse().map_err(|e| row_err(line, format!("{e}")))?;
        for (s, cell) in series.iter_mut().zip(row.iter().skip(1)) {
            let v: f64 = cell
                .parse()
                .map_err(|_| row_err(line, format!("invalid value `{cell}`")))?;
            s.values.insert(month, v);
        }
    }
    Ok(series)
}
