//! Descriptive statistics over result rows.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::registry::{select_best, ResultRow};

pub const DEFAULT_ROLLING_WINDOW: usize = 5;
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;
/// Bin width used when every histogram value is equal.
pub const DEGENERATE_BIN_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("column `{name}` has length {len}, expected {expected}")]
    LengthMismatch { name: String, len: usize, expected: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub task: String,
    pub dataset: String,
    pub nn: String,
    pub epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggRow {
    pub key: GroupKey,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for singleton groups.
    pub std: f64,
    pub mean_duration_ns: f64,
}

#[derive(Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
    duration_mean: f64,
}

impl Welford {
    fn push(&mut self, x: f64, duration: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.duration_mean += (duration - self.duration_mean) / self.n as f64;
    }
}

/// Mean and sample std of accuracy per (task, dataset, nn, epoch), sorted by key.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggRow> {
    let mut groups: BTreeMap<GroupKey, Welford> = BTreeMap::new();
    for r in rows {
        let key = GroupKey { task: r.task.clone(), dataset: r.dataset.clone(), nn: r.nn.clone(), epoch: r.epoch };
        groups.entry(key).or_default().push(r.accuracy, r.duration as f64);
    }
    groups
        .into_iter()
        .map(|(key, w)| AggRow {
            key,
            n: w.n,
            mean: w.mean,
            std: if w.n > 1 { (w.m2.max(0.0) / (w.n - 1) as f64).sqrt() } else { 0.0 },
            mean_duration_ns: w.duration_mean,
        })
        .collect()
}

/// Trailing mean over at most `window` points, aligned to the input.
pub fn rolling_mean(series: &[(f64, f64)], window: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    if window == 0 {
        return Err(StatsError::InvalidArgument("window must be at least 1".into()));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(StatsError::InvalidArgument("epochs must be strictly increasing".into()));
    }
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, &(x, _))| {
            let w = &series[(i + 1).saturating_sub(window)..=i];
            (x, w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64)
        })
        .collect())
}

/// Square correlation matrix with named axes. `None` marks undefined entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

/// Pairwise Pearson correlation. A zero-variance column correlates with
/// nothing, itself included.
pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrMatrix, StatsError> {
    let len = columns.first().map_or(0, |c| c.1.len());
    for (name, v) in columns {
        if v.len() != len {
            return Err(StatsError::LengthMismatch { name: name.clone(), len: v.len(), expected: len });
        }
    }
    if !columns.is_empty() && len < 2 {
        return Err(StatsError::InvalidArgument("correlation needs at least 2 observations".into()));
    }
    let centred: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|(_, v)| {
            let mean = v.iter().sum::<f64>() / len as f64;
            let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
            let ss = c.iter().map(|x| x * x).sum::<f64>();
            (c, ss)
        })
        .collect();
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let (ci, si) = &centred[i];
            let (cj, sj) = &centred[j];
            if *si == 0.0 || *sj == 0.0 {
                continue;
            }
            let r = if i == j {
                1.0
            } else {
                let cov: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                (cov / (si.sqrt() * sj.sqrt())).clamp(-1.0, 1.0)
            };
            values[i][j] = Some(r);
            values[j][i] = Some(r);
        }
    }
    Ok(CorrMatrix { names: columns.iter().map(|c| c.0.clone()).collect(), values })
}

/// Best row per (task, dataset, metric, nn), same rule as the registry query.
/// Rows are keyed by the hash of their hyperparameters for tie-breaking.
pub fn best_per_model(rows: Vec<ResultRow>) -> Vec<ResultRow> {
    let keyed: Vec<(ResultRow, String)> = rows
        .into_iter()
        .map(|r| {
            let k = crate::prm::prm_hash(&r.prm);
            (r, k)
        })
        .collect();
    select_best(keyed, |(r, k)| (r, k.as_str())).into_iter().map(|(r, _)| r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over [min, max]; bins are half-open except the last.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<Bin>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if bins == 0 {
        return Err(StatsError::InvalidArgument("bins must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("values must be finite".into()));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= DEGENERATE_BIN_WIDTH / 2.0;
        hi += DEGENERATE_BIN_WIDTH / 2.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|i| Bin {
            lo: lo + width * i as f64,
            hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for &v in values {
        let mut i = (((v - lo) / width).floor() as usize).min(bins - 1);
        // guard the floor against rounding at interior edges
        while i > 0 && v < out[i].lo {
            i -= 1;
        }
        while i + 1 < bins && v >= out[i + 1].lo {
            i += 1;
        }
        out[i].count += 1;
    }
    Ok(out)
}
