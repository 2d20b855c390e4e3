//! Plot specs built from stored result rows, one series per config.

use std::collections::BTreeMap;

use super::{PlotKind, PlotSpec, ReportError, Series};
use crate::prm::prm_hash;
use crate::registry::ResultRow;
use crate::stats::{aggregate, pearson_matrix};

fn series_name(r: &ResultRow) -> String {
    format!("{}_{}_{}_{}", r.task, r.dataset, r.metric, r.nn)
}

fn grouped(rows: &[ResultRow]) -> BTreeMap<String, Vec<&ResultRow>> {
    let mut m: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        m.entry(series_name(r)).or_default().push(r);
    }
    m
}

/// Elapsed training time at the end of each row's epoch, within its trial.
fn time_in_trial(rows: &[&ResultRow]) -> Vec<f64> {
    let mut trials: BTreeMap<String, Vec<(u32, usize)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        trials.entry(prm_hash(&r.prm)).or_default().push((r.epoch, i));
    }
    let mut out = vec![0.0; rows.len()];
    for mut members in trials.into_values() {
        members.sort();
        let mut t = 0.0;
        for (_, i) in members {
            t += rows[i].duration as f64;
            out[i] = t;
        }
    }
    out
}

/// The `kind` plot of `rows`. Heatmaps correlate the per-epoch aggregates
/// and need at least two of them.
pub fn plot_from_rows(kind: PlotKind, rows: &[ResultRow]) -> Result<PlotSpec, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    let mut spec = PlotSpec::new(kind, kind.name().replace('_', " "));
    let col = |g: &[&ResultRow], f: fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let epoch = |r: &ResultRow| r.epoch as f64;
    let acc = |r: &ResultRow| r.accuracy;
    let dur = |r: &ResultRow| r.duration as f64;
    match kind {
        PlotKind::ScatterAccEpoch | PlotKind::BoxAccEpoch | PlotKind::RollingMean => {
            for (name, g) in grouped(rows) {
                spec = spec.with_series(Series::new(name).with("epoch", col(&g, epoch)).with("accuracy", col(&g, acc)));
            }
        }
        PlotKind::ScatterAccDuration => {
            for (name, g) in grouped(rows) {
                spec = spec.with_series(Series::new(name).with("duration", col(&g, dur)).with("accuracy", col(&g, acc)));
            }
        }
        PlotKind::LineAccTime => {
            for (name, g) in grouped(rows) {
                spec = spec.with_series(Series::new(name).with("time", time_in_trial(&g)).with("accuracy", col(&g, acc)));
            }
        }
        PlotKind::HistogramAcc => {
            spec = spec.with_series(Series::new("all").with("accuracy", rows.iter().map(acc).collect()));
        }
        PlotKind::DurationDistribution => {
            spec = spec.with_series(Series::new("all").with("duration", rows.iter().map(dur).collect()));
        }
        PlotKind::MeanStdBand => {
            let mut bands: BTreeMap<String, Series> = BTreeMap::new();
            for a in aggregate(rows) {
                let name = format!("{}_{}_{}", a.key.task, a.key.dataset, a.key.nn);
                let s = bands.entry(name.clone()).or_insert_with(|| {
                    Series::new(name).with("epoch", vec![]).with("mean", vec![]).with("std", vec![])
                });
                s.vectors[0].1.push(a.key.epoch as f64);
                s.vectors[1].1.push(a.mean);
                s.vectors[2].1.push(a.std);
            }
            for s in bands.into_values() {
                spec = spec.with_series(s);
            }
        }
        PlotKind::CorrHeatmap => {
            let agg = aggregate(rows);
            if agg.len() < 2 {
                return Err(ReportError::InvalidSpec("a heatmap needs at least two aggregate rows".into()));
            }
            let columns = vec![
                ("epoch".to_string(), agg.iter().map(|a| a.key.epoch as f64).collect()),
                ("accuracy mean".to_string(), agg.iter().map(|a| a.mean).collect()),
                ("accuracy std".to_string(), agg.iter().map(|a| a.std).collect()),
                ("duration mean".to_string(), agg.iter().map(|a| a.mean_duration_ns).collect()),
            ];
            let m = pearson_matrix(&columns).map_err(|e| ReportError::InvalidSpec(e.to_string()))?;
            spec = PlotSpec::heatmap(spec.title, &m);
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prm::{PrmMap, PrmValue};

    fn row(nn: &str, lr: f64, epoch: u32, accuracy: f64) -> ResultRow {
        ResultRow {
            task: "img-classification".into(),
            dataset: "blobs".into(),
            metric: "acc".into(),
            metric_code: String::new(),
            nn: nn.into(),
            nn_code: String::new(),
            epoch,
            accuracy,
            duration: 1_000_000_000,
            prm: PrmMap::from([("lr".to_string(), PrmValue::Real(lr))]),
            transform_code: String::new(),
        }
    }

    #[test]
    fn one_series_per_config() {
        let rows = vec![row("A", 0.1, 1, 0.5), row("B", 0.1, 1, 0.6), row("A", 0.2, 1, 0.7)];
        let spec = plot_from_rows(PlotKind::ScatterAccEpoch, &rows).unwrap();
        let lens: Vec<usize> = spec.series.iter().map(Series::len).collect();
        assert_eq!(lens, [2, 1]);
    }

    #[test]
    fn time_accumulates_per_trial() {
        let rows = vec![row("A", 0.1, 2, 0.5), row("A", 0.2, 1, 0.6), row("A", 0.1, 1, 0.4)];
        let spec = plot_from_rows(PlotKind::LineAccTime, &rows).unwrap();
        assert_eq!(spec.series[0].get("time").unwrap(), [2e9, 1e9, 1e9]);
    }

    #[test]
    fn heatmap_needs_two_groups() {
        assert!(plot_from_rows(PlotKind::CorrHeatmap, &[row("A", 0.1, 1, 0.5)]).is_err());
        let rows = vec![row("A", 0.1, 1, 0.5), row("A", 0.1, 2, 0.6), row("A", 0.2, 1, 0.7), row("A", 0.2, 2, 0.7)];
        let spec = plot_from_rows(PlotKind::CorrHeatmap, &rows).unwrap();
        assert_eq!(spec.series[0].vectors.len(), 4);
        assert!(render_ok(&spec));
    }

    fn render_ok(spec: &PlotSpec) -> bool {
        super::super::render_svg(spec).is_ok()
    }

    #[test]
    fn every_kind_builds_from_rows() {
        let rows: Vec<ResultRow> = (1..=4).flat_map(|e| [row("A", 0.1, e, 0.1 * e as f64), row("A", 0.3, e, 0.2)]).collect();
        for kind in PlotKind::ALL {
            let spec = plot_from_rows(kind, &rows).unwrap();
            assert!(render_ok(&spec), "{kind}");
        }
    }
}
