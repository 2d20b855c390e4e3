//! Independent reference implementations and random instance generators.
//! Shared by the core integration tests and the acceptance target.
#![allow(dead_code, clippy::type_complexity, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use lemur_core::config::ConfigId;
use lemur_core::metrics::{BBox, Detection, GroundTruth, MaskPair};
use lemur_core::prm::{PrmMap, PrmValue};
use lemur_core::registry::{CodeKind, EpochResult, ResultRow, TrialDocument};
use lemur_core::report::{PlotKind, PlotSpec, Series};
use lemur_core::tpe::{sample_prior, ParamSpec, SearchSpace, StudyState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- metrics ----

/// mIoU from a full confusion matrix.
pub fn miou_confusion(pairs: &[(Vec<usize>, Vec<usize>)], k: usize) -> Option<f64> {
    let mut conf = vec![vec![0u64; k]; k];
    for (pred, target) in pairs {
        for (&p, &t) in pred.iter().zip(target) {
            conf[t][p] += 1;
        }
    }
    let mut ious = Vec::new();
    for c in 0..k {
        let tp = conf[c][c];
        let row: u64 = conf[c].iter().sum();
        let col: u64 = (0..k).map(|t| conf[t][c]).sum();
        let union = row + col - tp;
        if union > 0 {
            ious.push(tp as f64 / union as f64);
        }
    }
    if ious.is_empty() {
        None
    } else {
        Some(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Box IoU by explicit interval overlap.
pub fn box_iou_areas(a: [f64; 4], b: [f64; 4]) -> f64 {
    let overlap = |lo1: f64, hi1: f64, lo2: f64, hi2: f64| {
        let lo = if lo1 > lo2 { lo1 } else { lo2 };
        let hi = if hi1 < hi2 { hi1 } else { hi2 };
        if hi > lo { hi - lo } else { 0.0 }
    };
    let inter = overlap(a[0], a[2], b[0], b[2]) * overlap(a[1], a[3], b[1], b[3]);
    if inter == 0.0 {
        return 0.0;
    }
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    inter / (area_a + area_b - inter)
}

/// mAP@0.5 by enumerating the precision/recall curve and taking, at every
/// recall step, the best precision at that recall or beyond.
pub fn map_enumeration(dets: &[(usize, f64, [f64; 4])], gts: &[(usize, [f64; 4])]) -> Option<f64> {
    let mut classes: Vec<usize> = gts.iter().map(|g| g.0).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return None;
    }
    let mut aps = Vec::new();
    for c in &classes {
        let g: Vec<[f64; 4]> = gts.iter().filter(|x| x.0 == *c).map(|x| x.1).collect();
        let mut d: Vec<(usize, f64, [f64; 4])> =
            dets.iter().enumerate().filter(|(_, x)| x.0 == *c).map(|(i, x)| (i, x.1, x.2)).collect();
        // highest confidence first, input order among equals
        d.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut used = vec![false; g.len()];
        let mut curve = Vec::new();
        let mut tp = 0usize;
        for (rank, det) in d.iter().enumerate() {
            let mut best_j = usize::MAX;
            let mut best_iou = -1.0;
            for j in 0..g.len() {
                if !used[j] {
                    let iou = box_iou_areas(det.2, g[j]);
                    if iou >= 0.5 && iou > best_iou {
                        best_iou = iou;
                        best_j = j;
                    }
                }
            }
            if best_j != usize::MAX {
                used[best_j] = true;
                tp += 1;
            }
            curve.push((tp as f64 / g.len() as f64, tp as f64 / (rank + 1) as f64));
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for i in 0..curve.len() {
            let r = curve[i].0;
            if r > prev_recall {
                let p = curve[i..].iter().map(|x| x.1).fold(0.0, f64::max);
                ap += (r - prev_recall) * p;
                prev_recall = r;
            }
        }
        aps.push(ap);
    }
    Some(aps.iter().sum::<f64>() / aps.len() as f64)
}

pub fn random_box<R: Rng>(rng: &mut R) -> [f64; 4] {
    // a coarse grid makes exact overlaps and ties common
    let x1 = rng.gen_range(0..8) as f64 * 0.5;
    let y1 = rng.gen_range(0..8) as f64 * 0.5;
    let w = rng.gen_range(1..6) as f64 * 0.5;
    let h = rng.gen_range(1..6) as f64 * 0.5;
    [x1, y1, x1 + w, y1 + h]
}

pub fn to_bbox(b: [f64; 4]) -> BBox {
    BBox::new(b[0], b[1], b[2], b[3]).unwrap()
}

pub type DetectionInstance = (Vec<(usize, f64, [f64; 4])>, Vec<(usize, [f64; 4])>);

pub fn random_detection_instance<R: Rng>(rng: &mut R) -> DetectionInstance {
    let classes = rng.gen_range(1..4);
    let gts: Vec<(usize, [f64; 4])> = (0..rng.gen_range(1..7)).map(|_| (rng.gen_range(0..classes), random_box(rng))).collect();
    let mut dets = Vec::new();
    for _ in 0..rng.gen_range(0..10) {
        let conf = rng.gen_range(0..5) as f64 / 4.0;
        if rng.gen_bool(0.5) && !gts.is_empty() {
            // jitter a ground truth box
            let (c, b) = gts[rng.gen_range(0..gts.len())];
            let s = rng.gen_range(0..3) as f64 * 0.5;
            dets.push((c, conf, [b[0], b[1], b[2] + s, b[3] + s]));
        } else {
            dets.push((rng.gen_range(0..classes), conf, random_box(rng)));
        }
    }
    (dets, gts)
}

pub fn lemur_detections(inst: &DetectionInstance) -> (Vec<Detection>, Vec<GroundTruth>) {
    (
        inst.0.iter().map(|d| Detection::new(d.0, d.1, to_bbox(d.2)).unwrap()).collect(),
        inst.1.iter().map(|g| GroundTruth::new(g.0, to_bbox(g.1)).unwrap()).collect(),
    )
}

pub type MaskInstance = (usize, Vec<(Vec<usize>, Vec<usize>)>, usize, usize);

pub fn random_mask_instance<R: Rng>(rng: &mut R) -> MaskInstance {
    let k = rng.gen_range(1..6);
    let (h, w) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let pairs = (0..rng.gen_range(1..5))
        .map(|_| {
            let p = (0..h * w).map(|_| rng.gen_range(0..k)).collect();
            let t = (0..h * w).map(|_| rng.gen_range(0..k)).collect();
            (p, t)
        })
        .collect();
    (k, pairs, h, w)
}

pub fn lemur_masks(inst: &MaskInstance) -> Vec<MaskPair> {
    let (k, pairs, h, w) = inst;
    let grid = |v: &Vec<usize>| v.chunks(*w).map(|r| r.to_vec()).collect::<Vec<_>>();
    pairs
        .iter()
        .map(|(p, t)| {
            let (gp, gt) = (grid(p), grid(t));
            assert_eq!(gp.len(), *h);
            MaskPair::new(gp, gt, *k).unwrap()
        })
        .collect()
}

// ---- stats ----

pub fn mean_two_pass(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

pub fn std_two_pass(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean_two_pass(v);
    let mut ss = 0.0;
    for x in v {
        ss += (x - m) * (x - m);
    }
    (ss / (v.len() - 1) as f64).sqrt()
}

/// Groups by (task, dataset, nn, epoch): (n, mean, std, mean duration).
pub fn aggregate_oracle(rows: &[ResultRow]) -> BTreeMap<(String, String, String, u32), (usize, f64, f64, f64)> {
    let mut groups: BTreeMap<(String, String, String, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.task.clone(), r.dataset.clone(), r.nn.clone(), r.epoch))
            .or_default()
            .push((r.accuracy, r.duration as f64));
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let acc: Vec<f64> = v.iter().map(|x| x.0).collect();
            let dur: Vec<f64> = v.iter().map(|x| x.1).collect();
            (k, (v.len(), mean_two_pass(&acc), std_two_pass(&acc), mean_two_pass(&dur)))
        })
        .collect()
}

pub fn rolling_oracle(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            mean_two_pass(&values[lo..=i])
        })
        .collect()
}

/// Pearson r as the mean product of z-scores.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let (sx, sy) = (std_two_pass(x), std_two_pass(y));
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let (mx, my) = (mean_two_pass(x), mean_two_pass(y));
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - mx) / sx * ((y[i] - my) / sy);
    }
    Some(s / (x.len() - 1) as f64)
}

/// Rows spread over a few (task, nn, epoch) groups.
pub fn random_result_rows<R: Rng>(rng: &mut R) -> Vec<ResultRow> {
    (0..rng.gen_range(1..60))
        .map(|_| ResultRow {
            task: ["img-classification", "img-segmentation"][rng.gen_range(0..2)].into(),
            dataset: "set".into(),
            metric: "acc".into(),
            metric_code: String::new(),
            nn: format!("N{}", rng.gen_range(0..3)),
            nn_code: String::new(),
            epoch: rng.gen_range(1..4),
            accuracy: rng.gen(),
            duration: rng.gen_range(1..10_000_000_000),
            prm: PrmMap::new(),
            transform_code: String::new(),
        })
        .collect()
}

// ---- registry ----

/// Best row per (task, dataset, metric, nn) by full scan.
pub fn best_oracle(rows: &[(ResultRow, String)]) -> BTreeMap<(String, String, String, String), (f64, u32, String)> {
    let mut out: BTreeMap<(String, String, String, String), (f64, u32, String)> = BTreeMap::new();
    let mut groups: BTreeMap<(String, String, String, String), Vec<&(ResultRow, String)>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.0.task.clone(), r.0.dataset.clone(), r.0.metric.clone(), r.0.nn.clone())).or_default().push(r);
    }
    for (k, members) in groups {
        let max = members.iter().map(|m| m.0.accuracy).fold(f64::NEG_INFINITY, f64::max);
        let mut tied: Vec<(u32, String)> =
            members.iter().filter(|m| m.0.accuracy == max).map(|m| (m.0.epoch, m.1.clone())).collect();
        tied.sort();
        out.insert(k, (max, tied[0].0, tied[0].1.clone()));
    }
    out
}

const TOKENS: [&str; 5] = ["identity", "flip", "crop-32", "norm_a", "Aug.v2x"];
const TRANSFORMS: [&str; 4] = ["identity", "flip", "crop-32", "Jitter2"];

pub fn random_prm<R: Rng>(rng: &mut R) -> PrmMap {
    let mut prm = PrmMap::new();
    for key in ["lr", "momentum", "batch", "transform", "dropout"] {
        if rng.gen_bool(0.7) {
            let v = match rng.gen_range(0..4) {
                0 => PrmValue::Int(rng.gen_range(-1000..1000)),
                1 => PrmValue::Real(rng.gen::<f64>() * 10f64.powi(rng.gen_range(-8..8))),
                2 => PrmValue::Real(rng.gen_range(0..20) as f64),
                _ => PrmValue::Token(TOKENS[rng.gen_range(0..TOKENS.len())].to_string()),
            };
            prm.insert(key.to_string(), v);
        }
    }
    prm
}

/// A valid document with unusual but legal code texts.
pub fn random_document<R: Rng>(rng: &mut R) -> TrialDocument {
    let nn = format!("Net{}", rng.gen_range(0..5));
    let metric = ["acc", "iou", "map"][rng.gen_range(0..3)];
    let transform = TRANSFORMS[rng.gen_range(0..TRANSFORMS.len())];
    let n = rng.gen_range(1..6);
    let epochs = (1..=n)
        .map(|epoch| EpochResult {
            epoch,
            accuracy: if rng.gen_bool(0.1) { 1.0 } else { rng.gen::<f64>() },
            duration_ns: rng.gen_range(1..u64::MAX / 4),
        })
        .collect();
    let codes = [
        (CodeKind::Nn, format!("class Net:  # {nn}\n    \"quoted\", commas,\n\tand tabs\n")),
        (CodeKind::Metric, format!("metric {metric}\n")),
        (CodeKind::Transform, format!("transform {transform}\r\nline two ü\n")),
    ]
    .into_iter()
    .collect();
    TrialDocument {
        config: ConfigId::new(["img-classification", "obj-detection"][rng.gen_range(0..2)], "set-1", metric, &nn).unwrap(),
        transform: transform.to_string(),
        prm: random_prm(rng),
        epochs,
        codes,
    }
}

// ---- tpe ----

pub fn lr_objective(prm: &PrmMap) -> f64 {
    let lr = prm["lr"].as_f64().unwrap();
    -(lr.log10() + 3.0).powi(2)
}

pub fn bowl_objective(prm: &PrmMap) -> f64 {
    let lr = prm["lr"].as_f64().unwrap();
    let m = prm["momentum"].as_f64().unwrap();
    -(lr.log10() + 3.0).powi(2) - 4.0 * (m - 0.7).powi(2)
}

pub fn lr_space() -> SearchSpace {
    SearchSpace::new().with("lr", ParamSpec::LogUniform { lo: 1e-5, hi: 1e-1 })
}

pub fn bowl_space() -> SearchSpace {
    lr_space().with("momentum", ParamSpec::Uniform { lo: 0.0, hi: 0.99 })
}

#[derive(Debug)]
pub struct Paired {
    pub seeds: u64,
    pub wins: usize,
    pub median_tpe: f64,
    pub median_random: f64,
    /// Suggestions outside the space's domain.
    pub out_of_bounds: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Best objective found by TPE and by pure prior sampling, paired by seed.
pub fn tpe_vs_random(space: &SearchSpace, f: fn(&PrmMap) -> f64, seeds: u64, budget: usize) -> Paired {
    let mut out_of_bounds = 0;
    let mut tpe = Vec::new();
    let mut rnd = Vec::new();
    for seed in 0..seeds {
        let mut study = StudyState::new(space.clone(), seed).unwrap();
        for _ in 0..budget {
            let prm = study.suggest();
            if !space.conforms(&prm) {
                out_of_bounds += 1;
            }
            let y = f(&prm);
            study.observe(prm, y).unwrap();
        }
        tpe.push(study.best().unwrap().objective);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_4a4d);
        rnd.push((0..budget).map(|_| f(&sample_prior(space, &mut rng))).fold(f64::NEG_INFINITY, f64::max));
    }
    let wins = tpe.iter().zip(&rnd).filter(|(t, r)| t > r).count();
    Paired { seeds, wins, median_tpe: median(tpe), median_random: median(rnd), out_of_bounds }
}

// ---- report ----

fn tukey_outliers(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    v.iter().filter(|&&x| x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr).count()
}

fn count_class(node: roxmltree::Node, tag: &str, class: &str) -> usize {
    node.descendants().filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class)).count()
}

fn polyline_points(node: roxmltree::Node, class: &str) -> Vec<usize> {
    node.descendants()
        .filter(|n| n.has_tag_name("polyline") && n.attribute("class") == Some(class))
        .map(|n| n.attribute("points").unwrap_or("").split_whitespace().count())
        .collect()
}

/// Parses `svg` and checks its elements against the data of `spec`.
/// Returns a one-line description of what was counted.
pub fn check_svg(spec: &PlotSpec, svg: &str) -> Result<String, String> {
    let doc = roxmltree::Document::parse(svg).map_err(|e| format!("not well-formed: {e}"))?;
    let root = doc.root_element();
    if !root.has_tag_name("svg") || root.attribute("viewBox").is_none() {
        return Err("root is not an svg element with a viewBox".into());
    }
    let fail = |what: &str, got: usize, want: usize| Err(format!("{}: {what} {got}, expected {want}", spec.kind));
    let groups: Vec<roxmltree::Node> = root
        .descendants()
        .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("series"))
        .collect();
    let n: usize = spec.series.iter().map(|s| s.len()).sum();
    match spec.kind {
        PlotKind::ScatterAccEpoch | PlotKind::ScatterAccDuration => {
            let markers = count_class(root, "circle", "marker");
            if markers != n {
                return fail("markers", markers, n);
            }
            for (g, s) in groups.iter().zip(&spec.series) {
                if count_class(*g, "circle", "marker") != s.len() {
                    return fail("markers in a series", count_class(*g, "circle", "marker"), s.len());
                }
            }
            Ok(format!("{markers} markers for {n} points"))
        }
        PlotKind::LineAccTime | PlotKind::RollingMean | PlotKind::MeanStdBand => {
            let (class, distinct) = match spec.kind {
                PlotKind::LineAccTime => ("line", false),
                PlotKind::RollingMean => ("rolling", true),
                _ => ("mean", false),
            };
            if groups.len() != spec.series.len() {
                return fail("series groups", groups.len(), spec.series.len());
            }
            for (g, s) in groups.iter().zip(&spec.series) {
                let want = if distinct {
                    let mut e: Vec<u64> = s.get("epoch").unwrap().iter().map(|x| x.to_bits()).collect();
                    e.sort();
                    e.dedup();
                    e.len()
                } else {
                    s.len()
                };
                let got = polyline_points(*g, class);
                if got != [want] {
                    return Err(format!("{}: polyline points {got:?}, expected [{want}]", spec.kind));
                }
                if spec.kind == PlotKind::MeanStdBand && count_class(*g, "polygon", "band") != 1 {
                    return Err("mean_std_band: missing band".into());
                }
            }
            Ok(format!("{} series, {n} points", groups.len()))
        }
        PlotKind::BoxAccEpoch => {
            let mut by_epoch: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            for s in &spec.series {
                for (e, a) in s.get("epoch").unwrap().iter().zip(s.get("accuracy").unwrap()) {
                    by_epoch.entry(e.round() as i64).or_default().push(*a);
                }
            }
            let boxes: Vec<roxmltree::Node> = root
                .descendants()
                .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("box-group"))
                .collect();
            if boxes.len() != by_epoch.len() {
                return fail("boxes", boxes.len(), by_epoch.len());
            }
            let mut outliers = 0;
            for (b, values) in boxes.iter().zip(by_epoch.values()) {
                let want = tukey_outliers(values);
                let got = count_class(*b, "circle", "outlier");
                if got != want {
                    return fail("outliers", got, want);
                }
                if count_class(*b, "line", "whisker") != 2 || count_class(*b, "line", "median") != 1 {
                    return Err("box without two whiskers and a median".into());
                }
                outliers += got;
            }
            Ok(format!("{} boxes, {outliers} outliers", boxes.len()))
        }
        PlotKind::HistogramAcc | PlotKind::DurationDistribution => {
            let total: usize = root
                .descendants()
                .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("bar"))
                .map(|n| n.attribute("data-count").unwrap().parse::<usize>().unwrap())
                .sum();
            if total != n {
                return fail("binned values", total, n);
            }
            Ok(format!("{total} values binned"))
        }
        PlotKind::CorrHeatmap => {
            let k = spec.series[0].vectors.len();
            let cells = count_class(root, "rect", "cell");
            let notes = count_class(root, "text", "annotation");
            if cells != k * k || notes != k * k {
                return fail("cells", cells.min(notes), k * k);
            }
            Ok(format!("{cells} cells"))
        }
    }
}

/// A random plot of `kind` with one to three series.
pub fn random_plot<R: Rng>(kind: PlotKind, rng: &mut R) -> PlotSpec {
    let mut spec = PlotSpec::new(kind, format!("random {kind}"));
    if kind == PlotKind::CorrHeatmap {
        let k = rng.gen_range(1..6);
        let cols: Vec<(String, Vec<f64>)> =
            (0..k).map(|c| (format!("m{c}"), (0..10).map(|_| rng.gen::<f64>()).collect())).collect();
        return PlotSpec::heatmap("random", &lemur_core::stats::pearson_matrix(&cols).unwrap());
    }
    for s in 0..rng.gen_range(1..4) {
        let n = rng.gen_range(1..40);
        let mut series = Series::new(format!("s{s}"));
        for name in kind.required_vectors() {
            let v: Vec<f64> = match *name {
                "epoch" => (0..n).map(|i| (i % 7 + 1) as f64).collect(),
                "accuracy" | "mean" => (0..n).map(|_| if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.5..1.0) }).collect(),
                "std" => (0..n).map(|_| rng.gen_range(0.0..0.1)).collect(),
                _ => (0..n).map(|_| rng.gen_range(1e6..5e9)).collect(),
            };
            series = series.with(*name, v);
        }
        if kind == PlotKind::MeanStdBand {
            // one point per epoch
            let len = n.min(7);
            series.vectors.iter_mut().for_each(|v| v.1.truncate(len));
        }
        spec = spec.with_series(series);
    }
    spec
}

/// Sheet names with their rows (header included) as cell text.
pub fn read_workbook(path: &std::path::Path) -> Result<Vec<(String, Vec<Vec<String>>)>, String> {
    use std::io::Read;
    let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| e.to_string())?;
    let mut part = |name: &str| -> Result<String, String> {
        let mut s = String::new();
        zip.by_name(name).map_err(|e| format!("{name}: {e}"))?.read_to_string(&mut s).map_err(|e| e.to_string())?;
        Ok(s)
    };
    let book = part("xl/workbook.xml")?;
    let rels = part("xl/_rels/workbook.xml.rels")?;
    let rels_doc = roxmltree::Document::parse(&rels).map_err(|e| e.to_string())?;
    let target = |id: &str| {
        rels_doc
            .descendants()
            .find(|n| n.attribute("Id") == Some(id))
            .and_then(|n| n.attribute("Target"))
            .map(|t| format!("xl/{t}"))
    };
    let book_doc = roxmltree::Document::parse(&book).map_err(|e| e.to_string())?;
    let r_ns = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";
    let mut out = Vec::new();
    for sheet in book_doc.descendants().filter(|n| n.has_tag_name("sheet")) {
        let name = sheet.attribute("name").ok_or("sheet without name")?.to_string();
        let id = sheet.attribute((r_ns, "id")).ok_or("sheet without r:id")?;
        let xml = part(&target(id).ok_or(format!("no relationship {id}"))?)?;
        let doc = roxmltree::Document::parse(&xml).map_err(|e| e.to_string())?;
        let rows = doc
            .descendants()
            .filter(|n| n.has_tag_name("row"))
            .map(|row| {
                row.children()
                    .filter(|c| c.has_tag_name("c"))
                    .map(|c| c.descendants().filter(|t| t.has_tag_name("t") || t.has_tag_name("v")).filter_map(|t| t.text()).collect())
                    .collect()
            })
            .collect();
        out.push((name, rows));
    }
    Ok(out)
}
