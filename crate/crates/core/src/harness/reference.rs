//! Built-in reference trainer: softmax regression on three Gaussian blobs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::protocol::TrainRequest;
use super::serve::Trainer;
use crate::metrics::accuracy_of;
use crate::prm::{PrmMap, PrmValue};
use crate::registry::EpochResult;

pub const REFERENCE_NN: &str = "RefLinear";
pub const REFERENCE_IN_SHAPE: [usize; 1] = [2];
pub const REFERENCE_OUT_SHAPE: [usize; 1] = [3];
pub const REFERENCE_HYPERPARAMETERS: [&str; 3] = ["batch", "lr", "momentum"];

const CLASSES: usize = 3;
const DIM: usize = 2;
const TRAIN_PER_CLASS: usize = 100;
const TEST_PER_CLASS: usize = 50;
/// Distance between any two class means, in units of the blob std.
const MEAN_SEPARATION: f64 = 6.0;
const DATA_SEED: u64 = 0x000b_10b5;
/// Chosen so the untrained model spreads its predictions evenly over the classes.
const INIT_SEED: u64 = 39;
const INIT_SCALE: f64 = 0.01;

pub const REFERENCE_NN_CODE: &str = "\
reference model RefLinear
  logits = W x + b, W: 3x2, b: 3, softmax cross-entropy
  init: W ~ N(0, 0.01^2) from a fixed seed, b = 0
  optimizer: mini-batch SGD with momentum, v = m v + g, W -= lr v
  data: three unit-variance 2-D Gaussian blobs, pairwise mean distance 6,
        300 train / 150 test, fixed seed; accuracy on the test split
";

#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub train_x: Vec<[f64; DIM]>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<[f64; DIM]>,
    pub test_y: Vec<usize>,
}

fn class_mean(c: usize) -> [f64; DIM] {
    // vertices of an equilateral triangle with side MEAN_SEPARATION
    let radius = MEAN_SEPARATION / 3f64.sqrt();
    let angle = std::f64::consts::TAU * c as f64 / CLASSES as f64;
    [radius * angle.cos(), radius * angle.sin()]
}

impl Blobs {
    pub fn generate() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(DATA_SEED);
        let mut draw = |per_class: usize| {
            let mut xs = Vec::with_capacity(per_class * CLASSES);
            let mut ys = Vec::with_capacity(per_class * CLASSES);
            for c in 0..CLASSES {
                let m = class_mean(c);
                for _ in 0..per_class {
                    let dx: f64 = StandardNormal.sample(&mut rng);
                    let dy: f64 = StandardNormal.sample(&mut rng);
                    xs.push([m[0] + dx, m[1] + dy]);
                    ys.push(c);
                }
            }
            (xs, ys)
        };
        let (train_x, train_y) = draw(TRAIN_PER_CLASS);
        let (test_x, test_y) = draw(TEST_PER_CLASS);
        Blobs { train_x, train_y, test_x, test_y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePrm {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
}

impl ReferencePrm {
    pub fn from_prm(prm: &PrmMap) -> Result<Self, String> {
        let get = |k: &str| {
            prm.get(k)
                .and_then(PrmValue::as_f64)
                .ok_or_else(|| format!("bad hyperparameter: `{k}` missing or not numeric"))
        };
        let (lr, momentum, batch) = (get("lr")?, get("momentum")?, get("batch")?);
        if !(lr > 0.0 && lr <= 1.0) {
            return Err(format!("bad hyperparameter: lr {lr} outside (0, 1]"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(format!("bad hyperparameter: momentum {momentum} outside [0, 1)"));
        }
        if !(batch >= 1.0 && batch.fract() == 0.0 && batch <= (1u64 << 62) as f64 && (batch as u64).is_power_of_two()) {
            return Err(format!("bad hyperparameter: batch {batch} is not a power of two"));
        }
        Ok(ReferencePrm { lr, momentum, batch: batch as usize })
    }
}

struct Linear {
    w: [[f64; DIM]; CLASSES],
    b: [f64; CLASSES],
}

impl Linear {
    fn init() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
        let mut w = [[0.0; DIM]; CLASSES];
        for row in &mut w {
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = INIT_SCALE * z;
            }
        }
        Linear { w, b: [0.0; CLASSES] }
    }

    fn logits(&self, x: &[f64; DIM]) -> [f64; CLASSES] {
        std::array::from_fn(|k| self.b[k] + self.w[k][0] * x[0] + self.w[k][1] * x[1])
    }

    fn predict(&self, x: &[f64; DIM]) -> usize {
        let l = self.logits(x);
        (0..CLASSES).fold(0, |best, k| if l[k] > l[best] { k } else { best })
    }
}

fn softmax(l: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: [f64; CLASSES] = std::array::from_fn(|k| (l[k] - m).exp());
    let s: f64 = e.iter().sum();
    std::array::from_fn(|k| e[k] / s)
}

/// Trains and reports held-out accuracy after each epoch. Deterministic in
/// everything but the measured durations.
pub fn train_reference(
    data: &Blobs,
    p: ReferencePrm,
    max_epochs: u32,
    mut on_epoch: impl FnMut(EpochResult) -> Result<(), String>,
) -> Result<(), String> {
    let mut model = Linear::init();
    let mut vw = [[0.0; DIM]; CLASSES];
    let mut vb = [0.0; CLASSES];
    let mut order: Vec<usize> = (0..data.train_x.len()).collect();
    let batch = p.batch.min(order.len());
    for epoch in 1..=max_epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(DATA_SEED ^ u64::from(epoch));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut gw = [[0.0; DIM]; CLASSES];
            let mut gb = [0.0; CLASSES];
            for &i in chunk {
                let x = &data.train_x[i];
                let prob = softmax(model.logits(x));
                for k in 0..CLASSES {
                    let d = prob[k] - f64::from(u8::from(k == data.train_y[i]));
                    gb[k] += d;
                    gw[k][0] += d * x[0];
                    gw[k][1] += d * x[1];
                }
            }
            let n = chunk.len() as f64;
            for k in 0..CLASSES {
                vb[k] = p.momentum * vb[k] + gb[k] / n;
                model.b[k] -= p.lr * vb[k];
                for j in 0..DIM {
                    vw[k][j] = p.momentum * vw[k][j] + gw[k][j] / n;
                    model.w[k][j] -= p.lr * vw[k][j];
                }
            }
        }
        let predictions: Vec<usize> = data.test_x.iter().map(|x| model.predict(x)).collect();
        let accuracy = accuracy_of(&predictions, &data.test_y).map_err(|e| e.to_string())?;
        let duration_ns = (start.elapsed().as_nanos() as u64).max(1);
        on_epoch(EpochResult { epoch, accuracy, duration_ns })?;
    }
    Ok(())
}

/// The reference model served over the plugin protocol.
#[derive(Debug, Clone)]
pub struct ReferenceTrainer {
    data: Blobs,
    epoch_delay: std::time::Duration,
}

impl Default for ReferenceTrainer {
    fn default() -> Self {
        ReferenceTrainer { data: Blobs::generate(), epoch_delay: std::time::Duration::ZERO }
    }
}

impl ReferenceTrainer {
    /// Sleeps this long before reporting each epoch, for exercising slow plugins.
    pub fn with_epoch_delay(mut self, delay: std::time::Duration) -> Self {
        self.epoch_delay = delay;
        self
    }
}

impl Trainer for ReferenceTrainer {
    fn supported_hyperparameters(&self) -> Vec<String> {
        REFERENCE_HYPERPARAMETERS.iter().map(|s| s.to_string()).collect()
    }

    fn train(&mut self, req: &TrainRequest, on_epoch: &mut dyn FnMut(EpochResult) -> std::io::Result<()>)
        -> Result<(), String> {
        if req.in_shape != REFERENCE_IN_SHAPE || req.out_shape != REFERENCE_OUT_SHAPE {
            return Err(format!(
                "shape mismatch: model takes in_shape {REFERENCE_IN_SHAPE:?} and out_shape {REFERENCE_OUT_SHAPE:?}, got {:?} and {:?}",
                req.in_shape, req.out_shape
            ));
        }
        let p = ReferencePrm::from_prm(&req.prm)?;
        let delay = self.epoch_delay;
        train_reference(&self.data, p, req.max_epochs, |e| {
            std::thread::sleep(delay);
            on_epoch(e).map_err(|e| e.to_string())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(lr: f64, momentum: f64, batch: usize, epochs: u32) -> Vec<f64> {
        let mut acc = Vec::new();
        train_reference(&Blobs::generate(), ReferencePrm { lr, momentum, batch }, epochs, |e| {
            acc.push(e.accuracy);
            assert!(e.duration_ns > 0);
            Ok(())
        })
        .unwrap();
        acc
    }

    #[test]
    fn dataset_shape() {
        let b = Blobs::generate();
        assert_eq!((b.train_x.len(), b.test_x.len()), (300, 150));
        for c in 0..CLASSES {
            assert_eq!(b.test_y.iter().filter(|&&y| y == c).count(), 50);
        }
        let (m0, m1) = (class_mean(0), class_mean(1));
        assert!(((m0[0] - m1[0]).hypot(m0[1] - m1[1]) - 6.0).abs() < 1e-12);
        assert_eq!(Blobs::generate(), b);
    }

    #[test]
    fn learns_the_blobs() {
        let acc = run(0.1, 0.9, 16, 5);
        assert!(*acc.last().unwrap() >= 0.95, "{acc:?}");
    }

    #[test]
    fn tiny_step_stays_at_chance() {
        let acc = run(1e-9, 0.0, 16, 1);
        assert!((acc[0] - 1.0 / 3.0).abs() <= 0.1, "{acc:?}");
    }

    #[test]
    fn deterministic() {
        assert_eq!(run(0.05, 0.5, 8, 4), run(0.05, 0.5, 8, 4));
    }

    #[test]
    fn hyperparameter_guards() {
        let prm = |lr: f64, m: f64, b: PrmValue| -> PrmMap {
            [("lr".to_string(), PrmValue::Real(lr)), ("momentum".to_string(), PrmValue::Real(m)), ("batch".to_string(), b)]
                .into_iter()
                .collect()
        };
        assert!(ReferencePrm::from_prm(&prm(0.1, 0.9, PrmValue::Int(16))).is_ok());
        assert!(ReferencePrm::from_prm(&prm(0.0, 0.9, PrmValue::Int(16))).is_err());
        assert!(ReferencePrm::from_prm(&prm(1.5, 0.9, PrmValue::Int(16))).is_err());
        assert!(ReferencePrm::from_prm(&prm(0.1, 1.0, PrmValue::Int(16))).is_err());
        assert!(ReferencePrm::from_prm(&prm(0.1, 0.9, PrmValue::Int(12))).is_err());
        assert!(ReferencePrm::from_prm(&prm(0.1, 0.9, PrmValue::Int(0))).is_err());
        assert!(ReferencePrm::from_prm(&PrmMap::new()).is_err());
    }
}

