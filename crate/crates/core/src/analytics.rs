//! Diffusion index series, Pearson correlation against narrative indices,
//! and z-normalization.
//!
//! Standard deviations use the population (divide by n) convention in both
//! Pearson and z-normalization.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TopicPair, TopicVocabulary};
use crate::index::MonthlyIndexSeries;
use crate::month::{Month, MonthSeries};
use crate::sum::compensated_sum;

pub const DI_HEADER: [&str; 4] = ["month", "leading", "coincident", "lagging"];

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
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
    #[error("{path}: missing month {missing} (months must be consecutive)")]
    Gap { path: PathBuf, missing: Month },
    #[error("{path} line {line}: {kind} value {value} outside [0, 100]")]
    Range {
        path: PathBuf,
        line: u64,
        kind: DiKind,
        value: f64,
    },
    #[error("{0} is already cumulative")]
    AlreadyCumulative(DiKind),
    #[error("series is constant")]
    ZeroVariance,
    #[error("fewer than {k} defined cells ({available} available)")]
    InsufficientCells { k: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PearsonError {
    #[error("fewer than 2 overlapping months ({0})")]
    InsufficientOverlap(usize),
    #[error("zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiKind {
    Leading,
    Coincident,
    Lagging,
    CumulativeLeading,
    CumulativeCoincident,
    CumulativeLagging,
}

impl DiKind {
    pub const ALL: [DiKind; 6] = [
        Self::Leading,
        Self::Coincident,
        Self::Lagging,
        Self::CumulativeLeading,
        Self::CumulativeCoincident,
        Self::CumulativeLagging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Leading => "leading",
            Self::Coincident => "coincident",
            Self::Lagging => "lagging",
            Self::CumulativeLeading => "cumulative-leading",
            Self::CumulativeCoincident => "cumulative-coincident",
            Self::CumulativeLagging => "cumulative-lagging",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::Leading => "Leading DI",
            Self::Coincident => "Coincident DI",
            Self::Lagging => "Lagging DI",
            Self::CumulativeLeading => "Cumulative Leading DI",
            Self::CumulativeCoincident => "Cumulative Coincident DI",
            Self::CumulativeLagging => "Cumulative Lagging DI",
        }
    }

    pub fn is_cumulative(self) -> bool {
        matches!(
            self,
            Self::CumulativeLeading | Self::CumulativeCoincident | Self::CumulativeLagging
        )
    }

    pub fn cumulative(self) -> Option<DiKind> {
        match self {
            Self::Leading => Some(Self::CumulativeLeading),
            Self::Coincident => Some(Self::CumulativeCoincident),
            Self::Lagging => Some(Self::CumulativeLagging),
            _ => None,
        }
    }
}

impl fmt::Display for DiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DiKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown DI kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiSeries {
    pub kind: DiKind,
    pub values: MonthSeries,
}

/// Read the DI table. Months must be consecutive and values in [0, 100].
pub fn load_di(path: &Path) -> Result<[DiSeries; 3], AnalyticsError> {
    let csv_err = |source| AnalyticsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let row_err = |line: u64, message: String| AnalyticsError::Row {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(DI_HEADER) {
        return Err(row_err(
            1,
            "header must be `month,leading,coincident,lagging`".into(),
        ));
    }
    let kinds = [DiKind::Leading, DiKind::Coincident, DiKind::Lagging];
    let mut out = kinds.map(|kind| DiSeries {
        kind,
        values: MonthSeries::new(),
    });
    let mut prev: Option<Month> = None;
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let month: Month = row[0].parse().map_err(|e| row_err(line, format!("{e}")))?;
        if let Some(p) = prev {
            if month <= p {
                return Err(row_err(line, format!("month {month} does not follow {p}")));
            }
            if month != p.succ() {
                return Err(AnalyticsError::Gap {
                    path: path.to_path_buf(),
                    missing: p.succ(),
                });
            }
        }
        prev = Some(month);
        for (series, cell) in out.iter_mut().zip(row.iter().skip(1)) {
            let value: f64 = cell
                .parse()
                .map_err(|_| row_err(line, format!("invalid {} value `{cell}`", series.kind)))?;
            if !(0.0..=100.0).contains(&value) {
                return Err(AnalyticsError::Range {
                    path: path.to_path_buf(),
                    line,
                    kind: series.kind,
                    value,
                });
            }
            series.values.insert(month, value);
        }
    }
    Ok(out)
}

/// Running sum of `DI - 50`.
pub fn cumulative(di: &DiSeries) -> Result<DiSeries, AnalyticsError> {
    let kind = di
        .kind
        .cumulative()
        .ok_or(AnalyticsError::AlreadyCumulative(di.kind))?;
    let mut total = 0.0;
    let values = di
        .values
        .iter()
        .map(|(&m, &v)| {
            total += v - 50.0;
            (m, total)
        })
        .collect();
    Ok(DiSeries { kind, values })
}

/// The three raw series followed by their cumulative variants.
pub fn six_series(raw: &[DiSeries; 3]) -> Result<Vec<DiSeries>, AnalyticsError> {
    let mut out: Vec<DiSeries> = raw.to_vec();
    for s in raw {
        out.push(cumulative(s)?);
    }
    out.sort_by_key(|s| s.kind);
    Ok(out)
}

fn aligned(x: &MonthSeries, y: &MonthSeries) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .filter_map(|(m, &a)| y.get(m).map(|&b| (a, b)))
        .unzip()
}

fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Pearson correlation over the months present in both series.
pub fn pearson(x: &MonthSeries, y: &MonthSeries) -> Result<f64, PearsonError> {
    let (xs, ys) = aligned(x, y);
    pearson_slices(&xs, &ys)
}

/// Pearson correlation of two equal-length samples (two-pass, compensated).
pub fn pearson_slices(xs: &[f64], ys: &[f64]) -> Result<f64, PearsonError> {
    assert_eq!(xs.len(), ys.len(), "samples must be aligned");
    let n = xs.len();
    if n < 2 {
        return Err(PearsonError::InsufficientOverlap(n));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(xs) || constant(ys) {
        return Err(PearsonError::ZeroVariance);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let dx: Vec<f64> = xs.iter().map(|a| a - mx).collect();
    let dy: Vec<f64> = ys.iter().map(|b| b - my).collect();
    let sxy = compensated_sum(dx.iter().zip(&dy).map(|(a, b)| a * b));
    let sxx = compensated_sum(dx.iter().map(|a| a * a));
    let syy = compensated_sum(dy.iter().map(|b| b * b));
    if sxx == 0.0 || syy == 0.0 {
        return Err(PearsonError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rescale to mean 0 and population standard deviation 1.
pub fn znormalize(series: &MonthSeries) -> Result<MonthSeries, AnalyticsError> {
    let values: Vec<f64> = series.values().copied().collect();
    if values.is_empty() || values.iter().all(|&v| v == values[0]) {
        return Err(AnalyticsError::ZeroVariance);
    }
    let mu = mean(&values);
    let var = compensated_sum(values.iter().map(|v| (v - mu) * (v - mu))) / values.len() as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok(series.iter().map(|(&m, &v)| (m, (v - mu) / sd)).collect())
}

/// Topic-pair × DI Pearson grid. Rows are front topics, columns rear
/// topics; the diagonal is absent and undefined cells carry their reason.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub di_kind: DiKind,
    pub topics: Vec<String>,
    pub cells: BTreeMap<TopicPair, Result<f64, PearsonError>>,
}

impl CorrelationMatrix {
    pub fn get(&self, pair: &TopicPair) -> Option<f64> {
        self.cells.get(pair).and_then(|c| c.ok())
    }

    /// Defined cells in canonical (front, rear) vocabulary order.
    pub fn defined_cells(&self) -> Vec<(TopicPair, f64)> {
        let mut out = Vec::new();
        for front in &self.topics {
            for rear in &self.topics {
                let tp = TopicPair::new(front.clone(), rear.clone());
                if let Some(v) = self.get(&tp) {
                    out.push((tp, v));
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["front".to_string()];
        header.extend(self.topics.iter().cloned());
        w.write_record(&header)?;
        for front in &self.topics {
            let mut row = vec![front.clone()];
            for rear in &self.topics {
                let tp = TopicPair::new(front.clone(), rear.clone());
                row.push(self.get(&tp).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a matrix written by [`write_csv`](Self::write_csv). Empty
    /// off-diagonal cells come back as undefined.
    pub fn read_csv(path: &Path, di_kind: DiKind) -> Result<Self, AnalyticsError> {
        let csv_err = |source| AnalyticsError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let row_err = |line: u64, message: String| AnalyticsError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = reader.headers().map_err(csv_err)?.clone();
        let topics: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut cells = BTreeMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(csv_err)?;
            let line = row.position().map_or(0, |p| p.line());
            let front = &row[0];
            if topics.get(i).map(String::as_str) != Some(front) {
                return Err(row_err(line, format!("row label `{front}` out of order")));
            }
            for (rear, cell) in topics.iter().zip(row.iter().skip(1)) {
                if rear == front {
                    continue;
                }
                let value = if cell.is_empty() {
                    Err(PearsonError::ZeroVariance)
                } else {
                    Ok(cell
                        .parse::<f64>()
                        .map_err(|_| row_err(line, format!("invalid coefficient `{cell}`")))?)
                };
                cells.insert(TopicPair::new(front, rear.as_str()), value);
            }
        }
        Ok(Self {
            di_kind,
            topics,
            cells,
        })
    }
}

/// Correlate every narrative series with every DI series.
pub fn correlate_all(
    series: &[MonthlyIndexSeries],
    vocabulary: &TopicVocabulary,
    di_set: &[DiSeries],
) -> Vec<CorrelationMatrix> {
    di_set
        .iter()
        .map(|di| {
            let cells = series
                .par_iter()
                .map(|s| (s.topic_pair.clone(), pearson(&s.values, &di.values)))
                .collect::<Vec<_>>()
                .into_iter()
                .collect();
            CorrelationMatrix {
                di_kind: di.kind,
                topics: vocabulary.topics().to_vec(),
                cells,
            }
        })
        .collect()
}
