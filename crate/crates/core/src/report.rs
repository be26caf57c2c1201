//! Heatmaps and top-k normalized time-series tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analytics::{znormalize, AnalyticsError, CorrelationMatrix, DiSeries};
use crate::corpus::TopicPair;
use crate::index::MonthlyIndexSeries;
use crate::month::{Month, MonthSeries};

pub const DEFAULT_TOP_K: usize = 4;

const CELL: usize = 56;
const LABEL_GUTTER: usize = 230;
const TOP_GUTTER: usize = 250;
const LEGEND_WIDTH: usize = 90;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("heatmap matrix has no topics")]
    EmptyMatrix,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("no index series for {0}")]
    MissingSeries(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Blue (-1) through white (0) to red (+1).
pub fn diverging_color(r: f64) -> String {
    let t = r.clamp(-1.0, 1.0);
    let (from, to) = if t < 0.0 {
        ((255.0, 255.0, 255.0), (33.0, 102.0, 172.0))
    } else {
        ((255.0, 255.0, 255.0), (178.0, 24.0, 43.0))
    };
    let a = t.abs();
    let mix = |x: f64, y: f64| (x + (y - x) * a).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(from.0, to.0),
        mix(from.1, to.1),
        mix(from.2, to.2)
    )
}

/// Coefficient annotation with two decimals; never prints `-0.00`.
pub fn annotation(r: f64) -> String {
    let s = format!("{r:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Render the matrix as a self-contained SVG document.
pub fn heatmap_svg(matrix: &CorrelationMatrix) -> Result<String, ReportError> {
    let n = matrix.topics.len();
    if n == 0 {
        return Err(ReportError::EmptyMatrix);
    }
    let grid = n * CELL;
    let width = LABEL_GUTTER + grid + LEGEND_WIDTH + 20;
    let height = TOP_GUTTER + grid + 60;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" font-size="18" text-anchor="middle">Pearson correlation: narrative index vs {}</text>"#,
        width / 2,
        escape(matrix.di_kind.title())
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">rear (result) topic</text>"#,
        LABEL_GUTTER + grid / 2,
        TOP_GUTTER + grid + 40
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {y})">front (cause) topic</text>"#,
        y = TOP_GUTTER + grid / 2
    );

    for (i, topic) in matrix.topics.iter().enumerate() {
        let label = escape(topic);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end" dominant-baseline="middle">{label}</text>"#,
            LABEL_GUTTER - 6,
            TOP_GUTTER + i * CELL + CELL / 2
        );
        let x = LABEL_GUTTER + i * CELL + CELL / 2;
        let y = TOP_GUTTER - 6;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-size="11" text-anchor="start" transform="rotate(-60 {x} {y})">{label}</text>"#
        );
    }

    for (row, front) in matrix.topics.iter().enumerate() {
        for (col, rear) in matrix.topics.iter().enumerate() {
            let x = LABEL_GUTTER + col * CELL;
            let y = TOP_GUTTER + row * CELL;
            if row == col {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#ffffff" stroke="#cccccc"/>"##
                );
                continue;
            }
            match matrix.get(&TopicPair::new(front.as_str(), rear.as_str())) {
                Some(r) => {
                    let text_fill = if r.abs() > 0.6 { "#ffffff" } else { "#000000" };
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"/>"##,
                        diverging_color(r)
                    );
                    let _ = writeln!(
                        svg,
                        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" dominant-baseline="middle" fill="{text_fill}">{}</text>"#,
                        x + CELL / 2,
                        y + CELL / 2,
                        annotation(r)
                    );
                }
                None => {
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#e6e6e6" stroke="#cccccc"/>"##
                    );
                }
            }
        }
    }

    // legend: vertical gradient bar from +1 (top) to -1 (bottom)
    let lx = LABEL_GUTTER + grid + 24;
    let steps = 20;
    let step_h = grid as f64 / steps as f64;
    for s in 0..steps {
        let r = 1.0 - 2.0 * (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{:.1}" width="18" height="{:.1}" fill="{}"/>"#,
            TOP_GUTTER as f64 + s as f64 * step_h,
            step_h + 0.5,
            diverging_color(r)
        );
    }
    for (label, frac) in [("+1", 0.0), ("0", 0.5), ("-1", 1.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" font-size="11" dominant-baseline="middle">{label}</text>"#,
            lx + 24,
            TOP_GUTTER as f64 + frac * grid as f64
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_heatmap(matrix: &CorrelationMatrix, path: &Path) -> Result<(), ReportError> {
    let svg = heatmap_svg(matrix)?;
    std::fs::write(path, svg).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn heatmap_file_name(matrix: &CorrelationMatrix) -> String {
    format!("heatmap_{}.svg", matrix.di_kind.name())
}

/// The `k` highest defined cells. Ties keep canonical topic-pair order.
pub fn top_k_pairs(
    matrix: &CorrelationMatrix,
    k: usize,
) -> Result<Vec<(TopicPair, f64)>, ReportError> {
    if k == 0 {
        return Err(ReportError::ZeroK);
    }
    let mut cells = matrix.defined_cells();
    if cells.len() < k {
        return Err(AnalyticsError::InsufficientCells {
            k,
            available: cells.len(),
        }
        .into());
    }
    // stable sort preserves canonical order among equal coefficients
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    cells.truncate(k);
    Ok(cells)
}

/// Month-aligned, z-normalized DI and top-k narrative series.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub selected: Vec<(TopicPair, f64)>,
    pub months: Vec<Month>,
    pub di: Vec<f64>,
    pub series: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["month".to_string(), "di".to_string()];
        header.extend(self.selected.iter().map(|(tp, _)| tp.label()));
        w.write_record(&header)?;
        for (i, m) in self.months.iter().enumerate() {
            let mut row = vec![m.to_string(), self.di[i].to_string()];
            row.extend(self.series.iter().map(|s| s[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn top_k_series(
    matrix: &CorrelationMatrix,
    series: &[MonthlyIndexSeries],
    di: &DiSeries,
    k: usize,
) -> Result<ComparisonTable, ReportError> {
    let selected = top_k_pairs(matrix, k)?;
    let picked: Vec<&MonthlyIndexSeries> = selected
        .iter()
        .map(|(tp, _)| {
            series
                .iter()
                .find(|s| &s.topic_pair == tp)
                .ok_or_else(|| ReportError::MissingSeries(tp.label()))
        })
        .collect::<Result<_, _>>()?;

    // months shared by the DI and every selected series
    let months: Vec<Month> = di
        .values
        .keys()
        .filter(|m| picked.iter().all(|s| s.values.contains_key(m)))
        .copied()
        .collect();
    let restrict =
        |src: &MonthSeries| -> MonthSeries { months.iter().map(|m| (*m, src[m])).collect() };
    let di_z = znormalize(&restrict(&di.values))?;
    let series_z = picked
        .iter()
        .map(|s| znormalize(&restrict(&s.values)).map(|z| z.into_values().collect()))
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    Ok(ComparisonTable {
        selected,
        months,
        di: di_z.into_values().collect(),
        series: series_z,
    })
}

pub fn top_k_file_name(matrix: &CorrelationMatrix) -> String {
    format!("topk_{}.csv", matrix.di_kind.name())
}
