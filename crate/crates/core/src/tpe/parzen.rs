//! Per-parameter Parzen density estimators.
//!
//! Numeric parameters are modelled in an internal coordinate: the natural
//! log for log-uniform domains, the exponent for power-of-two integers
//! (widened by half a step on each side so every exponent gets equal mass
//! after rounding), and the value itself for uniform domains.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use super::space::ParamSpec;
use crate::prm::PrmValue;

const MAX_REJECTIONS: usize = 64;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian kernel truncated to the model's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub mean: f64,
    pub sigma: f64,
    pub weight: f64,
}

/// Mixture of one uniform prior component and truncated Gaussian kernels,
/// one per observation, over `[lo, hi]` in internal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericModel {
    pub lo: f64,
    pub hi: f64,
    pub prior_weight: f64,
    pub kernels: Vec<Kernel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalModel {
    pub choices: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParzenModel {
    Numeric(NumericModel),
    Categorical(CategoricalModel),
    /// Pinned domain: all mass on one value.
    Point(PrmValue),
}

/// Internal-coordinate domain of a numeric spec.
pub(crate) fn internal_domain(spec: &ParamSpec) -> Option<(f64, f64)> {
    match spec {
        ParamSpec::LogUniform { lo, hi } => Some((lo.ln(), hi.ln())),
        ParamSpec::Uniform { lo, hi } => Some((*lo, *hi)),
        ParamSpec::IntPow2 { min_power, max_power } => {
            Some((*min_power as f64 - 0.5, *max_power as f64 + 0.5))
        }
        ParamSpec::Categorical { .. } => None,
    }
}

pub(crate) fn to_internal(spec: &ParamSpec, value: &PrmValue) -> Option<f64> {
    match (spec, value) {
        (ParamSpec::LogUniform { .. }, PrmValue::Real(v)) => Some(v.ln()),
        (ParamSpec::Uniform { .. }, PrmValue::Real(v)) => Some(*v),
        (ParamSpec::IntPow2 { .. }, PrmValue::Int(v)) if *v > 0 => Some(v.trailing_zeros() as f64),
        _ => None,
    }
}

/// Maps an internal coordinate back into the domain, clamping rounding
/// error at the edges.
pub(crate) fn from_internal(spec: &ParamSpec, x: f64) -> PrmValue {
    match spec {
        ParamSpec::LogUniform { lo, hi } => PrmValue::Real(x.exp().clamp(*lo, *hi)),
        ParamSpec::Uniform { lo, hi } => PrmValue::Real(x.clamp(*lo, *hi)),
        ParamSpec::IntPow2 { min_power, max_power } => {
            let k = (x.round() as i64).clamp(*min_power as i64, *max_power as i64);
            PrmValue::Int(1i64 << k)
        }
        ParamSpec::Categorical { .. } => unreachable!("categorical specs have no internal coordinate"),
    }
}

impl NumericModel {
    /// Builds the mixture from observations in internal coordinates.
    pub fn fit(lo: f64, hi: f64, observations: &[f64]) -> Self {
        let n = observations.len();
        let width = hi - lo;
        let weight = 1.0 / (n as f64 + 1.0);
        if n == 0 {
            return NumericModel { lo, hi, prior_weight: 1.0, kernels: Vec::new() };
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| observations[a].total_cmp(&observations[b]));
        let min_sigma = width / (n as f64 + 1.0).min(100.0);
        let mut kernels = vec![Kernel { mean: 0.0, sigma: 0.0, weight }; n];
        for (rank, &idx) in order.iter().enumerate() {
            let mean = observations[idx].clamp(lo, hi);
            let left = if rank == 0 { lo } else { observations[order[rank - 1]] };
            let right = if rank + 1 == n { hi } else { observations[order[rank + 1]] };
            let sigma = (mean - left).max(right - mean).clamp(min_sigma, width);
            kernels[idx] = Kernel { mean, sigma, weight };
        }
        NumericModel { lo, hi, prior_weight: weight, kernels }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let width = self.hi - self.lo;
        let mut density = self.prior_weight / width;
        for k in &self.kernels {
            let a = (self.lo - k.mean) / k.sigma;
            let b = (self.hi - k.mean) / k.sigma;
            let mass = std_normal_cdf(b) - std_normal_cdf(a);
            density += k.weight * std_normal_pdf((x - k.mean) / k.sigma) / (k.sigma * mass);
        }
        density
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = self.prior_weight;
        if u < acc || self.kernels.is_empty() {
            return rng.gen_range(self.lo..=self.hi);
        }
        let mut chosen = self.kernels.last().expect("non-empty");
        for k in &self.kernels {
            acc += k.weight;
            if u < acc {
                chosen = k;
                break;
            }
        }
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = rng.sample(StandardNormal);
            let x = chosen.mean + chosen.sigma * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        chosen.mean
    }
}

impl CategoricalModel {
    /// Laplace-smoothed frequencies: `(count + 1) / (n + K)`.
    pub fn fit(choices: &[String], observations: &[&str]) -> Self {
        let k = choices.len() as f64;
        let n = observations.len() as f64;
        let weights = choices
            .iter()
            .map(|c| {
                let count = observations.iter().filter(|o| **o == c.as_str()).count() as f64;
                (count + 1.0) / (n + k)
            })
            .collect();
        CategoricalModel { choices: choices.to_vec(), weights }
    }

    pub fn pmf(&self, choice: &str) -> f64 {
        self.choices
            .iter()
            .position(|c| c == choice)
            .map_or(0.0, |i| self.weights[i])
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Fits a Parzen model for one parameter from its observed values.
///
/// Values not in the domain are ignored. An empty observation list yields
/// the prior alone.
pub fn fit_parzen(observations: &[PrmValue], spec: &ParamSpec) -> ParzenModel {
    if let Some(v) = spec.pinned_value() {
        return ParzenModel::Point(v);
    }
    match spec {
        ParamSpec::Categorical { choices } => {
            let obs: Vec<&str> = observations
                .iter()
                .filter(|v| spec.contains(v))
                .filter_map(PrmValue::as_token)
                .collect();
            ParzenModel::Categorical(CategoricalModel::fit(choices, &obs))
        }
        _ => {
            let (lo, hi) = internal_domain(spec).expect("numeric spec");
            let obs: Vec<f64> = observations
                .iter()
                .filter(|v| spec.contains(v))
                .filter_map(|v| to_internal(spec, v))
                .collect();
            ParzenModel::Numeric(NumericModel::fit(lo, hi, &obs))
        }
    }
}
