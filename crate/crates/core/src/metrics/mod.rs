//! Task evaluation metrics.
//!
//! - classification: accuracy
//! - segmentation: mean IoU, accumulated over the whole dataset
//! - detection: mAP at IoU 0.5 with all-point interpolation

mod detection;

pub use detection::{box_iou, map_at_50, BBox, Detection, GroundTruth, MATCH_IOU_THRESHOLD};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("predictions and targets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("predicted and target masks differ in shape")]
    ShapeMismatch,
    #[error("class id {id} out of range for {num_classes} classes")]
    ClassOutOfRange { id: usize, num_classes: usize },
    #[error("mask pairs disagree on the number of classes")]
    NumClassesMismatch,
    #[error("no class has a non-empty union")]
    NoValidClass,
    #[error("no ground truth boxes; mAP is undefined")]
    NoGroundTruth,
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
}

/// Predicted and true class labels for one evaluation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    predictions: Vec<usize>,
    targets: Vec<usize>,
}

impl LabelBatch {
    pub fn new(predictions: Vec<usize>, targets: Vec<usize>) -> Result<Self, MetricError> {
        if predictions.len() != targets.len() {
            return Err(MetricError::LengthMismatch(predictions.len(), targets.len()));
        }
        if predictions.is_empty() {
            return Err(MetricError::EmptyBatch);
        }
        Ok(LabelBatch { predictions, targets })
    }
}

/// Fraction of positions where the prediction equals the target.
pub fn accuracy(batch: &LabelBatch) -> f64 {
    let correct = batch
        .predictions
        .iter()
        .zip(&batch.targets)
        .filter(|(p, t)| p == t)
        .count();
    correct as f64 / batch.predictions.len() as f64
}

/// Convenience wrapper validating raw slices.
pub fn accuracy_of(predictions: &[usize], targets: &[usize]) -> Result<f64, MetricError> {
    Ok(accuracy(&LabelBatch::new(predictions.to_vec(), targets.to_vec())?))
}

/// A predicted and a target segmentation mask of equal shape, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    height: usize,
    width: usize,
    predicted: Vec<usize>,
    target: Vec<usize>,
    num_classes: usize,
}

impl MaskPair {
    pub fn new(predicted: Vec<Vec<usize>>, target: Vec<Vec<usize>>, num_classes: usize) -> Result<Self, MetricError> {
        if num_classes == 0 {
            return Err(MetricError::ClassOutOfRange { id: 0, num_classes });
        }
        let height = predicted.len();
        let width = predicted.first().map_or(0, Vec::len);
        let rectangular = |g: &[Vec<usize>]| g.len() == height && g.iter().all(|r| r.len() == width);
        if !rectangular(&predicted) || !rectangular(&target) {
            return Err(MetricError::ShapeMismatch);
        }
        let predicted: Vec<usize> = predicted.into_iter().flatten().collect();
        let target: Vec<usize> = target.into_iter().flatten().collect();
        if let Some(&id) = predicted.iter().chain(&target).find(|&&id| id >= num_classes) {
            return Err(MetricError::ClassOutOfRange { id, num_classes });
        }
        Ok(MaskPair { height, width, predicted, target, num_classes })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Per-class intersection and union counts accumulated over mask pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IouAccumulator {
    intersection: Vec<u64>,
    union: Vec<u64>,
}

impl IouAccumulator {
    pub fn new(num_classes: usize) -> Self {
        IouAccumulator { intersection: vec![0; num_classes], union: vec![0; num_classes] }
    }

    pub fn add(&mut self, pair: &MaskPair) -> Result<(), MetricError> {
        if pair.num_classes != self.intersection.len() {
            return Err(MetricError::NumClassesMismatch);
        }
        for (&p, &t) in pair.predicted.iter().zip(&pair.target) {
            if p == t {
                self.intersection[p] += 1;
                self.union[p] += 1;
            } else {
                self.union[p] += 1;
                self.union[t] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &IouAccumulator) -> Result<(), MetricError> {
        if other.union.len() != self.union.len() {
            return Err(MetricError::NumClassesMismatch);
        }
        for c in 0..self.union.len() {
            self.intersection[c] += other.intersection[c];
            self.union[c] += other.union[c];
        }
        Ok(())
    }

    /// Per-class IoU; `None` where the union is empty.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect()
    }

    pub fn mean(&self) -> Result<f64, MetricError> {
        let valid: Vec<f64> = self.per_class().into_iter().flatten().collect();
        if valid.is_empty() {
            return Err(MetricError::NoValidClass);
        }
        Ok(valid.iter().sum::<f64>() / valid.len() as f64)
    }
}

/// Mean IoU over classes with a non-empty union, counts accumulated across
/// all pairs before dividing.
pub fn mean_iou(pairs: &[MaskPair]) -> Result<f64, MetricError> {
    let first = pairs.first().ok_or(MetricError::NoValidClass)?;
    let mut acc = IouAccumulator::new(first.num_classes);
    for p in pairs {
        acc.add(p)?;
    }
    acc.mean()
}

/// Source text stored in the registry for the built-in metrics, keyed by
/// the metric token used in configuration ids.
pub fn builtin_metric_code(name: &str) -> Option<&'static str> {
    match name {
        "acc" => Some("builtin metric acc: correct predictions / total predictions\n"),
        "iou" => Some("builtin metric iou: mean over classes with non-empty union of I/U, accumulated over the dataset\n"),
        "map" => Some("builtin metric map: mean over classes with ground truth of all-point AP at IoU >= 0.5\n"),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy_of(&[3, 1, 4], &[3, 1, 4]).unwrap(), 1.0);
        assert_eq!(accuracy_of(&[0, 1, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(accuracy_of(&[], &[]), Err(MetricError::EmptyBatch));
        assert_eq!(accuracy_of(&[1], &[1, 2]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn iou_identity() {
        let m = vec![vec![0, 1], vec![1, 0]];
        let pair = MaskPair::new(m.clone(), m, 2).unwrap();
        assert_eq!(mean_iou(&[pair]).unwrap(), 1.0);
    }

    #[test]
    fn iou_hand_counted() {
        // class 0: I = 2, U = 4 -> 0.5; class 1: I = 0, U = 2 -> 0
        let pair = MaskPair::new(vec![vec![0, 0], vec![0, 0]], vec![vec![0, 0], vec![1, 1]], 2).unwrap();
        assert_eq!(mean_iou(&[pair]).unwrap(), 0.25);
    }

    #[test]
    fn iou_disjoint() {
        let pair = MaskPair::new(vec![vec![1, 1]], vec![vec![0, 0]], 2).unwrap();
        assert_eq!(mean_iou(&[pair]).unwrap(), 0.0);
    }

    #[test]
    fn iou_skips_absent_classes() {
        let pair = MaskPair::new(vec![vec![0, 0]], vec![vec![0, 0]], 5).unwrap();
        assert_eq!(mean_iou(&[pair]).unwrap(), 1.0);
    }

    #[test]
    fn iou_guards() {
        assert_eq!(mean_iou(&[]), Err(MetricError::NoValidClass));
        assert_eq!(
            MaskPair::new(vec![vec![0, 2]], vec![vec![0, 0]], 2),
            Err(MetricError::ClassOutOfRange { id: 2, num_classes: 2 })
        );
        assert_eq!(MaskPair::new(vec![vec![0, 0]], vec![vec![0]], 2), Err(MetricError::ShapeMismatch));
        let a = MaskPair::new(vec![vec![0]], vec![vec![0]], 2).unwrap();
        let b = MaskPair::new(vec![vec![0]], vec![vec![0]], 3).unwrap();
        assert_eq!(mean_iou(&[a, b]), Err(MetricError::NumClassesMismatch));
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<MaskPair>> {
        (1usize..5, 1usize..5, 1usize..6).prop_flat_map(|(h, w, k)| {
            let grid = prop::collection::vec(prop::collection::vec(0..k, w), h);
            prop::collection::vec((grid.clone(), grid), 1..6).prop_map(move |v| {
                v.into_iter().map(|(p, t)| MaskPair::new(p, t, k).unwrap()).collect()
            })
        })
    }

    proptest! {
        #[test]
        fn iou_is_batching_invariant(pairs in arb_pairs(), split in 0usize..6) {
            let split = split.min(pairs.len());
            let whole = mean_iou(&pairs).unwrap();
            let mut left = IouAccumulator::new(pairs[0].num_classes());
            pairs[..split].iter().for_each(|p| left.add(p).unwrap());
            let mut right = IouAccumulator::new(pairs[0].num_classes());
            pairs[split..].iter().for_each(|p| right.add(p).unwrap());
            left.merge(&right).unwrap();
            prop_assert_eq!(left.mean().unwrap(), whole);
            prop_assert!((0.0..=1.0).contains(&whole));
        }

        #[test]
        fn iou_is_permutation_invariant(pairs in arb_pairs()) {
            let mut reversed = pairs.clone();
            reversed.reverse();
            prop_assert_eq!(mean_iou(&pairs).unwrap(), mean_iou(&reversed).unwrap());
        }

        #[test]
        fn accuracy_in_unit_interval(v in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
            let (p, t): (Vec<_>, Vec<_>) = v.into_iter().unzip();
            let a = accuracy_of(&p, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
