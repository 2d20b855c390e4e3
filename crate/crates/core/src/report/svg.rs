use std::collections::BTreeMap;
use std::fmt::Write;

use super::{PlotKind, PlotSpec, ReportError, Series};
use crate::stats::{histogram, rolling_mean, DEFAULT_HISTOGRAM_BINS, DEFAULT_ROLLING_WINDOW};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const NS_PER_S: f64 = 1e9;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {}
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(values: impl IntoIterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if lo == hi {
            let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.05 };
            (lo, hi) = (lo - pad, hi + pad);
        } else {
            let pad = (hi - lo) * 0.04;
            (lo, hi) = (lo - pad, hi + pad);
        }
        Axis { lo, hi, p0, p1 }
    }

    fn exact(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        Axis { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    fn ticks(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=4).map(move |i| self.lo + (self.hi - self.lo) * i as f64 / 4.0)
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(spec: &PlotSpec) -> Self {
        let mut out = String::new();
        let _ = write!(
            out,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11" data-kind="{}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text class="title" x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
"#,
            spec.kind,
            WIDTH / 2.0,
            esc(&spec.title)
        );
        Canvas { out }
    }

    fn axes(&mut self, x: &Axis, y: &Axis, x_label: &str, y_label: &str, x_ticks: bool) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let o = &mut self.out;
        let _ = writeln!(o, r##"<g class="axes" stroke="#333" fill="none">"##);
        let _ = writeln!(o, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
        let _ = writeln!(o, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
        let _ = writeln!(o, "</g>");
        let _ = writeln!(o, r##"<g class="ticks" fill="#333">"##);
        for t in y.ticks() {
            let py = y.map(t);
            let _ = writeln!(
                o,
                r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 7.0,
                py + 4.0,
                tick_label(t)
            );
        }
        if x_ticks {
            for t in x.ticks() {
                let px = x.map(t);
                let _ = writeln!(
                    o,
                    r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="#333"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
                    y0 + 4.0,
                    y0 + 17.0,
                    tick_label(t)
                );
            }
        }
        let _ = writeln!(o, "</g>");
        let _ = writeln!(
            o,
            r#"<text class="x-label" x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 14.0,
            esc(x_label)
        );
        let _ = writeln!(
            o,
            r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(y_label)
        );
    }

    fn legend(&mut self, names: &[&str]) {
        let x = WIDTH - RIGHT + 16.0;
        let _ = writeln!(self.out, r#"<g class="legend">"#);
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 8.0 + 18.0 * i as f64;
            let _ = writeln!(
                self.out,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                y - 9.0,
                PALETTE[i % PALETTE.len()],
                x + 15.0,
                y,
                esc(name)
            );
        }
        let _ = writeln!(self.out, "</g>");
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn polyline(out: &mut String, class: &str, color: &str, pts: &[(f64, f64)], x: &Axis, y: &Axis, extra: &str) {
    let coords: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", x.map(a), y.map(b))).collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{}"/>"#,
        coords.join(" ")
    );
}

/// Values of `name`, with durations and times converted from ns to seconds.
fn display(s: &Series, name: &str) -> Vec<f64> {
    let v = s.get(name).unwrap_or(&[]);
    if matches!(name, "duration" | "time") {
        v.iter().map(|x| x / NS_PER_S).collect()
    } else {
        v.to_vec()
    }
}

fn xy(s: &Series, xn: &str, yn: &str) -> Vec<(f64, f64)> {
    display(s, xn).into_iter().zip(display(s, yn)).collect()
}

/// Per distinct x, the mean of y, sorted by x.
fn mean_by_x(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut m: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for &(x, y) in pts {
        // order-preserving key for finite floats
        let bits = x.to_bits();
        let key = if x >= 0.0 { bits | 1 << 63 } else { !bits };
        let e = m.entry(key).or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    m.into_values().map(|(x, s, n)| (x, s / n as f64)).collect()
}

/// Tukey box-plot summary with linearly interpolated quartiles.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// `None` for an empty sample.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    Some(BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
    })
}

fn plot_area() -> (f64, f64, f64, f64) {
    (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP)
}

fn render_xy(spec: &PlotSpec, c: &mut Canvas, xn: &str) {
    let (x0, x1, y0, y1) = plot_area();
    let series: Vec<Vec<(f64, f64)>> = spec.series.iter().map(|s| xy(s, xn, "accuracy")).collect();
    let all = series.iter().flatten();
    let x = Axis::new(all.clone().map(|p| p.0), x0, x1);
    let y = Axis::new(all.map(|p| p.1), y0, y1);
    c.axes(&x, &y, &spec.x_label, &spec.y_label, true);
    for (i, (s, pts)) in spec.series.iter().zip(&series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(c.out, r#"<g class="series" data-name="{}">"#, esc(&s.name));
        match spec.kind {
            PlotKind::LineAccTime => {
                let mut sorted = pts.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                polyline(&mut c.out, "line", color, &sorted, &x, &y, "");
            }
            PlotKind::RollingMean => {
                let means = mean_by_x(pts);
                polyline(&mut c.out, "raw", color, &means, &x, &y, r#" stroke-opacity="0.3""#);
                let smooth = rolling_mean(&means, DEFAULT_ROLLING_WINDOW).expect("x values are strictly increasing");
                polyline(&mut c.out, "rolling", color, &smooth, &x, &y, "");
            }
            _ => {
                for &(a, b) in pts {
                    let _ = writeln!(
                        c.out,
                        r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.7"/>"#,
                        x.map(a),
                        y.map(b)
                    );
                }
            }
        }
        let _ = writeln!(c.out, "</g>");
    }
}

fn render_band(spec: &PlotSpec, c: &mut Canvas) {
    let (x0, x1, y0, y1) = plot_area();
    let mut rows: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for s in &spec.series {
        let mut r: Vec<(f64, f64, f64)> = (0..s.len())
            .map(|i| (s.get("epoch").unwrap()[i], s.get("mean").unwrap()[i], s.get("std").unwrap()[i]))
            .collect();
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.push(r);
    }
    let all = rows.iter().flatten();
    let x = Axis::new(all.clone().map(|r| r.0), x0, x1);
    let y = Axis::new(all.flat_map(|r| [r.1 - r.2, r.1 + r.2]), y0, y1);
    c.axes(&x, &y, &spec.x_label, &spec.y_label, true);
    for (i, (s, r)) in spec.series.iter().zip(&rows).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = r.iter().map(|p| format!("{:.2},{:.2}", x.map(p.0), y.map(p.1 + p.2)));
        let lower = r.iter().rev().map(|p| format!("{:.2},{:.2}", x.map(p.0), y.map(p.1 - p.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(c.out, r#"<g class="series" data-name="{}">"#, esc(&s.name));
        let _ = writeln!(
            c.out,
            r#"<polygon class="band" fill="{color}" fill-opacity="0.2" stroke="none" points="{}"/>"#,
            band.join(" ")
        );
        let means: Vec<(f64, f64)> = r.iter().map(|p| (p.0, p.1)).collect();
        polyline(&mut c.out, "mean", color, &means, &x, &y, "");
        let _ = writeln!(c.out, "</g>");
    }
}

fn render_box(spec: &PlotSpec, c: &mut Canvas) {
    let (x0, x1, y0, y1) = plot_area();
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for s in &spec.series {
        for (e, a) in xy(s, "epoch", "accuracy") {
            groups.entry(e.round() as i64).or_default().push(a);
        }
    }
    let y = Axis::new(groups.values().flatten().copied(), y0, y1);
    let n = groups.len() as f64;
    let x = Axis::exact(0.0, n, x0, x1);
    c.axes(&x, &y, &spec.x_label, &spec.y_label, false);
    let slot = (x1 - x0) / n;
    let half = (slot * 0.3).min(24.0);
    for (i, (epoch, values)) in groups.iter().enumerate() {
        let b = box_stats(values).expect("groups are non-empty");
        let cx = x.map(i as f64 + 0.5);
        let o = &mut c.out;
        let _ = writeln!(o, r#"<g class="box-group" data-epoch="{epoch}" stroke="{}">"#, PALETTE[0]);
        let _ = writeln!(
            o,
            r#"<line class="whisker" data-value="{}" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
            b.whisker_lo,
            y.map(b.whisker_lo),
            y.map(b.q1)
        );
        let _ = writeln!(
            o,
            r#"<line class="whisker" data-value="{}" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
            b.whisker_hi,
            y.map(b.q3),
            y.map(b.whisker_hi)
        );
        let _ = writeln!(
            o,
            r#"<rect class="box" data-q1="{}" data-q3="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.3"/>"#,
            b.q1,
            b.q3,
            cx - half,
            y.map(b.q3),
            2.0 * half,
            (y.map(b.q1) - y.map(b.q3)).max(0.5),
            PALETTE[0]
        );
        let _ = writeln!(
            o,
            r#"<line class="median" data-value="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke-width="2"/>"#,
            b.median,
            cx - half,
            y.map(b.median),
            cx + half,
            y.map(b.median)
        );
        for v in &b.outliers {
            let _ = writeln!(
                o,
                r#"<circle class="outlier" data-value="{v}" cx="{cx:.2}" cy="{:.2}" r="3" fill="none"/>"#,
                y.map(*v)
            );
        }
        let _ = writeln!(
            o,
            r##"<text x="{cx:.2}" y="{}" text-anchor="middle" stroke="none" fill="#333">{epoch}</text>"##,
            y0 + 17.0
        );
        let _ = writeln!(o, "</g>");
    }
}

fn render_histogram(spec: &PlotSpec, c: &mut Canvas, vector: &str) -> Result<(), ReportError> {
    let (x0, x1, y0, y1) = plot_area();
    let values: Vec<f64> = spec.series.iter().flat_map(|s| display(s, vector)).collect();
    let bins = histogram(&values, DEFAULT_HISTOGRAM_BINS).map_err(|_| ReportError::EmptySeries)?;
    let x = Axis::exact(bins[0].lo, bins[bins.len() - 1].hi, x0, x1);
    let max = bins.iter().map(|b| b.count).max().unwrap_or(1) as f64;
    let y = Axis::exact(0.0, max * 1.05, y0, y1);
    c.axes(&x, &y, &spec.x_label, &spec.y_label, true);
    let _ = writeln!(c.out, r#"<g class="bars" fill="{}" stroke="white">"#, PALETTE[0]);
    for b in &bins {
        let _ = writeln!(
            c.out,
            r#"<rect class="bar" data-lo="{}" data-hi="{}" data-count="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
            b.lo,
            b.hi,
            b.count,
            x.map(b.lo),
            y.map(b.count as f64),
            (x.map(b.hi) - x.map(b.lo)).max(0.5),
            y.map(0.0) - y.map(b.count as f64)
        );
    }
    let _ = writeln!(c.out, "</g>");
    Ok(())
}

/// Diverging blue-white-red scale over [-1, 1].
fn corr_color(r: f64) -> String {
    if r.is_nan() {
        return "#dddddd".into();
    }
    let t = r.clamp(-1.0, 1.0);
    let (from, to) = if t >= 0.0 { ([255.0, 255.0, 255.0], [178.0, 24.0, 43.0]) } else { ([255.0, 255.0, 255.0], [33.0, 102.0, 172.0]) };
    let a = t.abs();
    let ch = |i: usize| (from[i] + (to[i] - from[i]) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn render_heatmap(spec: &PlotSpec, c: &mut Canvas) {
    let s = &spec.series[0];
    let n = s.vectors.len();
    let side = ((WIDTH - LEFT - RIGHT).min(HEIGHT - TOP - BOTTOM) - 20.0) / n as f64;
    let gx = LEFT + 40.0;
    let gy = TOP + 10.0;
    let _ = writeln!(c.out, r#"<g class="heatmap">"#);
    for (i, (row_name, row)) in s.vectors.iter().enumerate() {
        let _ = writeln!(
            c.out,
            r#"<text class="row-label" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            gx - 4.0,
            gy + side * (i as f64 + 0.5) + 4.0,
            esc(row_name)
        );
        for (j, &r) in row.iter().enumerate() {
            let (x, y) = (gx + side * j as f64, gy + side * i as f64);
            let label = if r.is_nan() { "n/a".to_string() } else { format!("{r:.2}") };
            let ink = if r.abs() > 0.6 { "white" } else { "#222" };
            let _ = writeln!(
                c.out,
                r#"<rect class="cell" data-row="{i}" data-col="{j}" x="{x:.2}" y="{y:.2}" width="{side:.2}" height="{side:.2}" fill="{}" stroke="white"/><text class="annotation" x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}">{label}</text>"#,
                corr_color(r),
                x + side / 2.0,
                y + side / 2.0 + 4.0
            );
        }
    }
    for (j, (name, _)) in s.vectors.iter().enumerate() {
        let x = gx + side * (j as f64 + 0.5);
        let y = gy + side * n as f64 + 14.0;
        let _ = writeln!(
            c.out,
            r#"<text class="col-label" x="{x:.2}" y="{y:.2}" text-anchor="middle">{}</text>"#,
            esc(name)
        );
    }
    let _ = writeln!(c.out, "</g>");
}

/// Renders a standalone SVG document.
pub fn render_svg(spec: &PlotSpec) -> Result<String, ReportError> {
    spec.validate()?;
    let mut c = Canvas::new(spec);
    match spec.kind {
        PlotKind::ScatterAccEpoch | PlotKind::RollingMean => render_xy(spec, &mut c, "epoch"),
        PlotKind::ScatterAccDuration => render_xy(spec, &mut c, "duration"),
        PlotKind::LineAccTime => render_xy(spec, &mut c, "time"),
        PlotKind::BoxAccEpoch => render_box(spec, &mut c),
        PlotKind::HistogramAcc => render_histogram(spec, &mut c, "accuracy")?,
        PlotKind::DurationDistribution => render_histogram(spec, &mut c, "duration")?,
        PlotKind::MeanStdBand => render_band(spec, &mut c),
        PlotKind::CorrHeatmap => render_heatmap(spec, &mut c),
    }
    if spec.kind != PlotKind::CorrHeatmap && spec.kind != PlotKind::BoxAccEpoch && spec.series.len() > 1 {
        let names: Vec<&str> = spec.series.iter().map(|s| s.name.as_str()).collect();
        c.legend(&names);
    }
    Ok(c.finish())
}
