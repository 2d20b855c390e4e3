//! SVG plots, CSV tables and XLSX workbooks.

mod build;
mod csv_io;
mod svg;
mod xlsx;

use serde::{Deserialize, Serialize};

pub use build::plot_from_rows;
pub use csv_io::{export_csv, import_csv, read_csv, write_agg_csv, write_csv};
pub use svg::{box_stats, render_svg, BoxStats};
pub use xlsx::{export_workbook, Cell, Sheet, WorkbookMode, WorkbookSpec, MAX_SHEET_NAME};

use crate::stats::CorrMatrix;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("plot has no data points")]
    EmptySeries,
    #[error("invalid plot: {0}")]
    InvalidSpec(String),
    #[error("workbook has no data rows")]
    EmptyWorkbook,
    #[error("invalid workbook: {0}")]
    InvalidWorkbook(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    ScatterAccEpoch,
    ScatterAccDuration,
    LineAccTime,
    BoxAccEpoch,
    HistogramAcc,
    RollingMean,
    MeanStdBand,
    CorrHeatmap,
    DurationDistribution,
}

impl PlotKind {
    pub const ALL: [PlotKind; 9] = [
        PlotKind::ScatterAccEpoch,
        PlotKind::ScatterAccDuration,
        PlotKind::LineAccTime,
        PlotKind::BoxAccEpoch,
        PlotKind::HistogramAcc,
        PlotKind::RollingMean,
        PlotKind::MeanStdBand,
        PlotKind::CorrHeatmap,
        PlotKind::DurationDistribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::ScatterAccEpoch => "scatter_acc_epoch",
            PlotKind::ScatterAccDuration => "scatter_acc_duration",
            PlotKind::LineAccTime => "line_acc_time",
            PlotKind::BoxAccEpoch => "box_acc_epoch",
            PlotKind::HistogramAcc => "histogram_acc",
            PlotKind::RollingMean => "rolling_mean",
            PlotKind::MeanStdBand => "mean_std_band",
            PlotKind::CorrHeatmap => "corr_heatmap",
            PlotKind::DurationDistribution => "duration_distribution",
        }
    }

    /// Vector names every series must carry. Heatmaps take one vector per
    /// matrix row instead.
    pub fn required_vectors(self) -> &'static [&'static str] {
        match self {
            PlotKind::ScatterAccEpoch | PlotKind::BoxAccEpoch | PlotKind::RollingMean => &["epoch", "accuracy"],
            PlotKind::ScatterAccDuration => &["duration", "accuracy"],
            PlotKind::LineAccTime => &["time", "accuracy"],
            PlotKind::HistogramAcc => &["accuracy"],
            PlotKind::MeanStdBand => &["epoch", "mean", "std"],
            PlotKind::CorrHeatmap => &[],
            PlotKind::DurationDistribution => &["duration"],
        }
    }

    pub fn is_scatter(self) -> bool {
        matches!(self, PlotKind::ScatterAccEpoch | PlotKind::ScatterAccDuration)
    }
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PlotKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ReportError::InvalidSpec(format!("unknown plot kind `{s}`")))
    }
}

/// Named data vectors drawn as one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub vectors: Vec<(String, Vec<f64>)>,
}

impl Series {
    pub fn new(name: impl Into<String>) -> Self {
        Series { name: name.into(), vectors: Vec::new() }
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.vectors.push((name.into(), values));
        self
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors.iter().find(|v| v.0 == name).map(|v| v.1.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.1.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl PlotSpec {
    /// A spec with the default axis labels of `kind`.
    pub fn new(kind: PlotKind, title: impl Into<String>) -> Self {
        let (x, y) = match kind {
            PlotKind::ScatterAccEpoch | PlotKind::BoxAccEpoch | PlotKind::RollingMean => ("epoch", "accuracy"),
            PlotKind::ScatterAccDuration => ("duration (s)", "accuracy"),
            PlotKind::LineAccTime => ("time (s)", "accuracy"),
            PlotKind::HistogramAcc => ("accuracy", "count"),
            PlotKind::MeanStdBand => ("epoch", "mean accuracy"),
            PlotKind::CorrHeatmap => ("", ""),
            PlotKind::DurationDistribution => ("duration (s)", "count"),
        };
        PlotSpec { kind, title: title.into(), x_label: x.into(), y_label: y.into(), series: Vec::new() }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    /// Heatmap of a correlation matrix; undefined entries become NaN.
    pub fn heatmap(title: impl Into<String>, m: &CorrMatrix) -> Self {
        let mut s = Series::new("correlation");
        for (name, row) in m.names.iter().zip(&m.values) {
            s = s.with(name.clone(), row.iter().map(|v| v.unwrap_or(f64::NAN)).collect());
        }
        PlotSpec::new(PlotKind::CorrHeatmap, title).with_series(s)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let invalid = |m: String| Err(ReportError::InvalidSpec(m));
        if self.series.iter().all(Series::is_empty) {
            return Err(ReportError::EmptySeries);
        }
        for s in &self.series {
            let len = s.len();
            if let Some((name, v)) = s.vectors.iter().find(|v| v.1.len() != len) {
                return invalid(format!("series `{}`: vector `{name}` has length {}, expected {len}", s.name, v.len()));
            }
            if self.kind == PlotKind::CorrHeatmap {
                if self.series.len() != 1 {
                    return invalid("a heatmap takes exactly one series".into());
                }
                if s.vectors.len() != len {
                    return invalid(format!("heatmap needs a square matrix, got {}x{len}", s.vectors.len()));
                }
                continue;
            }
            for req in self.kind.required_vectors() {
                if s.get(req).is_none() {
                    return invalid(format!("series `{}` lacks vector `{req}` required by {}", s.name, self.kind));
                }
            }
            if s.vectors.iter().any(|v| v.1.iter().any(|x| !x.is_finite())) {
                return invalid(format!("series `{}` has non-finite values", s.name));
            }
        }
        Ok(())
    }
}
