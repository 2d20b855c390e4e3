use super::MetricError;

/// Minimum IoU for a detection to match a ground truth box.
pub const MATCH_IOU_THRESHOLD: f64 = 0.5;

/// Axis-aligned box `(x1, y1, x2, y2)` with `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, MetricError> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(MetricError::InvalidBox(format!("non-finite coordinate in {self:?}")));
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(MetricError::InvalidBox(format!("empty box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn new(class_id: usize, confidence: f64, bbox: BBox) -> Result<Self, MetricError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(MetricError::InvalidConfidence(confidence));
        }
        bbox.validate()?;
        Ok(Detection { class_id, confidence, bbox })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BBox,
}

impl GroundTruth {
    pub fn new(class_id: usize, bbox: BBox) -> Result<Self, MetricError> {
        bbox.validate()?;
        Ok(GroundTruth { class_id, bbox })
    }
}

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Average precision of one class from its confidence-ranked match flags.
fn average_precision(matched: &[bool], num_gt: usize) -> f64 {
    // Precision/recall after each ranked detection.
    let mut recall = Vec::with_capacity(matched.len() + 2);
    let mut precision = Vec::with_capacity(matched.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (rank, &m) in matched.iter().enumerate() {
        tp += usize::from(m);
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);

    // Monotone non-increasing envelope, right to left.
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// Mean average precision at IoU 0.5.
///
/// Per class, detections are ranked by confidence (ties keep input order)
/// and each is greedily matched to the unmatched ground truth of its class
/// with the highest IoU, ties to the earlier ground truth, provided the IoU
/// reaches the threshold. AP is the area under the precision envelope;
/// the mean runs over classes that have ground truth.
pub fn map_at_50(dets: &[Detection], gts: &[GroundTruth]) -> Result<f64, MetricError> {
    if gts.is_empty() {
        return Err(MetricError::NoGroundTruth);
    }
    for d in dets {
        Detection::new(d.class_id, d.confidence, d.bbox)?;
    }
    for g in gts {
        g.bbox.validate()?;
    }

    let mut classes: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut total = 0.0;
    for &class in &classes {
        let class_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class).collect();
        let mut class_dets: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class).collect();
        class_dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

        let mut taken = vec![false; class_gts.len()];
        let matched: Vec<bool> = class_dets
            .iter()
            .map(|d| {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in class_gts.iter().enumerate() {
                    if taken[j] {
                        continue;
                    }
                    let iou = box_iou(&d.bbox, &g.bbox);
                    if iou >= MATCH_IOU_THRESHOLD && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((j, iou));
                    }
                }
                match best {
                    Some((j, _)) => {
                        taken[j] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        total += average_precision(&matched, class_gts.len());
    }
    Ok(total / classes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_cases() {
        assert_eq!(box_iou(&b(0., 0., 2., 2.), &b(0., 0., 2., 2.)), 1.0);
        assert_eq!(box_iou(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)), 0.0);
        assert_eq!(box_iou(&b(0., 0., 1., 1.), &b(1., 0., 2., 1.)), 0.0);
        assert_eq!(box_iou(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.)), 1.0 / 7.0);
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(BBox::new(1., 0., 1., 2.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 2.).is_err());
        assert!(Detection::new(0, 1.5, b(0., 0., 1., 1.)).is_err());
    }

    #[test]
    fn perfect_match() {
        let gt = [GroundTruth::new(0, b(0., 0., 4., 4.)).unwrap()];
        let det = [Detection::new(0, 0.8, b(0., 0., 4., 4.)).unwrap()];
        assert_eq!(map_at_50(&det, &gt).unwrap(), 1.0);
    }

    #[test]
    fn below_threshold() {
        // intersection 8, union 20
        let det = [Detection::new(0, 0.8, b(0., 0., 4., 2.)).unwrap()];
        let gt = [GroundTruth::new(0, b(0., 0., 4., 5.)).unwrap()];
        assert!((box_iou(&det[0].bbox, &gt[0].bbox) - 0.4).abs() < 1e-12);
        assert_eq!(map_at_50(&det, &gt).unwrap(), 0.0);
    }

    #[test]
    fn false_positive_ranked_first_halves_ap() {
        let gt = [GroundTruth::new(0, b(0., 0., 1., 1.)).unwrap()];
        let det = [
            Detection::new(0, 0.9, b(5., 5., 6., 6.)).unwrap(),
            Detection::new(0, 0.3, b(0., 0., 1., 1.)).unwrap(),
        ];
        assert_eq!(map_at_50(&det, &gt).unwrap(), 0.5);
    }

    #[test]
    fn class_without_detections_scores_zero() {
        let gt = [
            GroundTruth::new(0, b(0., 0., 1., 1.)).unwrap(),
            GroundTruth::new(1, b(0., 0., 1., 1.)).unwrap(),
        ];
        let det = [Detection::new(0, 0.5, b(0., 0., 1., 1.)).unwrap()];
        assert_eq!(map_at_50(&det, &gt).unwrap(), 0.5);
        // detections of a class without ground truth do not enter the mean
        let det = [det[0], Detection::new(7, 0.9, b(0., 0., 1., 1.)).unwrap()];
        assert_eq!(map_at_50(&det, &gt).unwrap(), 0.5);
    }

    #[test]
    fn no_ground_truth() {
        assert_eq!(map_at_50(&[], &[]), Err(MetricError::NoGroundTruth));
    }
}
