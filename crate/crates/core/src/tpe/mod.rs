//! Tree-structured Parzen Estimator sampler.
//!
//! Parameters are modelled independently. After `n_startup` completed
//! trials, each suggestion splits the history into a good and a bad set,
//! fits a Parzen density to each, draws candidates from the good density
//! and keeps the one maximizing `l(x) / g(x)`.
//!
//! Suggestions are a pure function of the study state: the random stream is
//! derived from the seed and the number of trials issued so far, so a study
//! resumed from a checkpoint continues exactly where it stopped.

mod parzen;
mod space;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use parzen::{fit_parzen, CategoricalModel, Kernel, NumericModel, ParzenModel};
pub use space::{ParamSpec, SearchSpace, SpaceError};

use crate::prm::{PrmMap, PrmValue};

pub const DEFAULT_GAMMA: f64 = 0.25;
pub const DEFAULT_N_STARTUP: usize = 10;
pub const DEFAULT_N_CANDIDATES: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TpeError {
    #[error("objective is not finite ({0}); trial recorded as failed")]
    NonFinite(f64),
    #[error("hyperparameters do not conform to the search space")]
    NonConforming,
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("n_candidates must be positive")]
    NoCandidates,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub prm: PrmMap,
    pub objective: f64,
}

/// Complete, serializable state of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub space: SearchSpace,
    history: Vec<Trial>,
    #[serde(default)]
    failed: Vec<PrmMap>,
    pub direction: Direction,
    pub seed: u64,
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl StudyState {
    pub fn new(space: SearchSpace, seed: u64) -> Result<Self, TpeError> {
        space.validate()?;
        Ok(StudyState {
            space,
            history: Vec::new(),
            failed: Vec::new(),
            direction: Direction::Maximize,
            seed,
            gamma: DEFAULT_GAMMA,
            n_startup: DEFAULT_N_STARTUP,
            n_candidates: DEFAULT_N_CANDIDATES,
        })
    }

    pub fn with_settings(mut self, gamma: f64, n_startup: usize, n_candidates: usize) -> Result<Self, TpeError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(TpeError::BadGamma(gamma));
        }
        if n_candidates == 0 {
            return Err(TpeError::NoCandidates);
        }
        self.gamma = gamma;
        self.n_startup = n_startup;
        self.n_candidates = n_candidates;
        Ok(self)
    }

    pub fn history(&self) -> &[Trial] {
        &self.history
    }

    pub fn failed(&self) -> &[PrmMap] {
        &self.failed
    }

    /// Trials issued so far, completed or failed.
    pub fn trials_issued(&self) -> usize {
        self.history.len() + self.failed.len()
    }

    /// Appends a completed trial. A non-finite objective is recorded as a
    /// failure and reported as an error.
    pub fn observe(&mut self, prm: PrmMap, objective: f64) -> Result<(), TpeError> {
        if !self.space.conforms(&prm) {
            return Err(TpeError::NonConforming);
        }
        if !objective.is_finite() {
            self.failed.push(prm);
            return Err(TpeError::NonFinite(objective));
        }
        self.history.push(Trial { prm, objective });
        Ok(())
    }

    /// Records a trial that produced no objective.
    pub fn record_failure(&mut self, prm: PrmMap) {
        self.failed.push(prm);
    }

    pub fn best(&self) -> Option<&Trial> {
        let better = |a: &Trial, b: &Trial| match self.direction {
            Direction::Maximize => a.objective > b.objective,
            Direction::Minimize => a.objective < b.objective,
        };
        self.history.iter().fold(None, |best: Option<&Trial>, t| match best {
            Some(b) if !better(t, b) => Some(b),
            _ => Some(t),
        })
    }

    fn next_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.trials_issued() as u64);
        rng
    }

    pub fn suggest(&self) -> PrmMap {
        suggest(self)
    }
}

/// Draws one point from the prior of every parameter.
pub fn sample_prior<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> PrmMap {
    space
        .iter()
        .map(|(name, spec)| (name.to_owned(), sample_prior_param(spec, rng)))
        .collect()
}

fn sample_prior_param<R: Rng + ?Sized>(spec: &ParamSpec, rng: &mut R) -> PrmValue {
    if let Some(v) = spec.pinned_value() {
        return v;
    }
    match spec {
        ParamSpec::LogUniform { lo, hi } => {
            let x: f64 = rng.gen_range(lo.ln()..=hi.ln());
            PrmValue::Real(x.exp().clamp(*lo, *hi))
        }
        ParamSpec::Uniform { lo, hi } => PrmValue::Real(rng.gen_range(*lo..=*hi)),
        ParamSpec::IntPow2 { min_power, max_power } => {
            PrmValue::Int(1i64 << rng.gen_range(*min_power..=*max_power))
        }
        ParamSpec::Categorical { choices } => PrmValue::Token(choices[rng.gen_range(0..choices.len())].clone()),
    }
}

/// Sorts trials best-first (stable) and splits off the top
/// `max(1, ceil(gamma * n))` as the good set.
pub fn split_good_bad(history: &[Trial], gamma: f64, direction: Direction) -> (Vec<&Trial>, Vec<&Trial>) {
    let mut sorted: Vec<&Trial> = history.iter().collect();
    match direction {
        Direction::Maximize => sorted.sort_by(|a, b| b.objective.total_cmp(&a.objective)),
        Direction::Minimize => sorted.sort_by(|a, b| a.objective.total_cmp(&b.objective)),
    }
    if sorted.is_empty() {
        return (sorted, Vec::new());
    }
    let n_good = ((gamma * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let bad = sorted.split_off(n_good);
    (sorted, bad)
}

/// Proposes the next hyperparameter map.
pub fn suggest(study: &StudyState) -> PrmMap {
    let mut rng = study.next_rng();
    if study.history.len() < study.n_startup {
        return sample_prior(&study.space, &mut rng);
    }
    let (good, bad) = split_good_bad(&study.history, study.gamma, study.direction);
    let column = |trials: &[&Trial], name: &str| -> Vec<PrmValue> {
        trials.iter().filter_map(|t| t.prm.get(name).cloned()).collect()
    };

    let mut out = PrmMap::new();
    for (name, spec) in study.space.iter() {
        let below = fit_parzen(&column(&good, name), spec);
        let above = fit_parzen(&column(&bad, name), spec);
        let value = match (below, above) {
            (ParzenModel::Point(v), _) => v,
            (ParzenModel::Numeric(l), ParzenModel::Numeric(g)) => {
                let mut best = (f64::NEG_INFINITY, l.lo);
                for _ in 0..study.n_candidates {
                    let x = l.sample(&mut rng);
                    let score = l.pdf(x).ln() - g.pdf(x).ln();
                    if score > best.0 {
                        best = (score, x);
                    }
                }
                parzen::from_internal(spec, best.1)
            }
            (ParzenModel::Categorical(l), ParzenModel::Categorical(g)) => {
                let mut best = (f64::NEG_INFINITY, 0);
                for _ in 0..study.n_candidates {
                    let i = l.sample_index(&mut rng);
                    let score = l.weights[i].ln() - g.weights[i].ln();
                    if score > best.0 {
                        best = (score, i);
                    }
                }
                PrmValue::Token(l.choices[best.1].clone())
            }
            _ => unreachable!("both models are fitted from the same spec"),
        };
        out.insert(name.to_owned(), value);
    }
    out
}
