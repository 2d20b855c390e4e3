//! Configuration identifiers and hyperparameter range arguments.
//!
//! A configuration is written `task_dataset_metric_nn`. Underscores separate
//! the four fields and may not appear inside them; hyphens may.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tpe::{ParamSpec, SearchSpace, SpaceError};

/// Default number of optimization trials per study.
pub const DEFAULT_TRIALS: u32 = 100;
/// Default (and maximum) number of training epochs per trial.
pub const DEFAULT_MAX_EPOCHS: u32 = 50;
pub const MAX_EPOCHS_LIMIT: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config `{input}`: {reason}")]
    MalformedConfig { input: String, reason: String },
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

/// One benchmark configuration: (task, dataset, metric, nn).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawConfigId")]
pub struct ConfigId {
    pub task: String,
    pub dataset: String,
    pub metric: String,
    pub nn: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfigId {
    task: String,
    dataset: String,
    metric: String,
    nn: String,
}

impl TryFrom<RawConfigId> for ConfigId {
    type Error = ConfigError;

    fn try_from(r: RawConfigId) -> Result<Self, Self::Error> {
        ConfigId::new(r.task, r.dataset, r.metric, r.nn)
    }
}

fn is_token(s: &str, allow_upper: bool) -> bool {
    !s.is_empty()
        && s.split('-').all(|part| {
            !part.is_empty()
                && part.bytes().all(|b| {
                    b.is_ascii_digit() || b.is_ascii_lowercase() || (allow_upper && b.is_ascii_uppercase())
                })
        })
}

/// `[a-z0-9]+(-[a-z0-9]+)*`
pub fn is_lower_token(s: &str) -> bool {
    is_token(s, false)
}

/// `[A-Za-z0-9]+(-[A-Za-z0-9]+)*`
pub fn is_name_token(s: &str) -> bool {
    is_token(s, true)
}

impl ConfigId {
    pub fn new(
        task: impl Into<String>,
        dataset: impl Into<String>,
        metric: impl Into<String>,
        nn: impl Into<String>,
    ) -> Result<Self, ConfigError> {
        let c = ConfigId {
            task: task.into(),
            dataset: dataset.into(),
            metric: metric.into(),
            nn: nn.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("task", self.task.as_str(), false),
            ("dataset", self.dataset.as_str(), false),
            ("metric", self.metric.as_str(), false),
            ("nn", self.nn.as_str(), true),
        ];
        for (field, value, upper) in fields {
            if !is_token(value, upper) {
                let reason = if value.is_empty() {
                    format!("field `{field}` is empty")
                } else {
                    format!("field `{field}` has illegal characters in `{value}`")
                };
                return Err(ConfigError::MalformedConfig { input: self.to_string(), reason });
            }
        }
        Ok(())
    }
}

/// Parses `task_dataset_metric_nn`.
pub fn parse_config(s: &str) -> Result<ConfigId, ConfigError> {
    let malformed = |reason: String| ConfigError::MalformedConfig { input: s.to_owned(), reason };
    let fields: Vec<&str> = s.split('_').collect();
    if fields.len() != 4 {
        return Err(malformed(format!(
            "expected 4 underscore-separated fields (task_dataset_metric_nn), found {}",
            fields.len()
        )));
    }
    let names = ["task", "dataset", "metric", "nn"];
    for (i, (name, value)) in names.iter().zip(&fields).enumerate() {
        if value.is_empty() {
            return Err(malformed(format!("field `{name}` is empty")));
        }
        if !is_token(value, i == 3) {
            return Err(malformed(format!("field `{name}` has illegal characters in `{value}`")));
        }
    }
    Ok(ConfigId {
        task: fields[0].to_owned(),
        dataset: fields[1].to_owned(),
        metric: fields[2].to_owned(),
        nn: fields[3].to_owned(),
    })
}

pub fn format_config(c: &ConfigId) -> String {
    c.to_string()
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}_{}", self.task, self.dataset, self.metric, self.nn)
    }
}

impl FromStr for ConfigId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}

/// Hyperparameter ranges as given on the command line.
///
/// Setting a minimum equal to its maximum pins that hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeArgs {
    pub min_learning_rate: f64,
    pub max_learning_rate: f64,
    pub min_batch_binary_power: u32,
    pub max_batch_binary_power: u32,
    pub min_momentum: f64,
    pub max_momentum: f64,
    pub transform: Option<String>,
    pub trials: u32,
    pub max_epochs: u32,
}

impl Default for RangeArgs {
    fn default() -> Self {
        RangeArgs {
            min_learning_rate: 1e-4,
            max_learning_rate: 1e-1,
            min_batch_binary_power: 2,
            max_batch_binary_power: 7,
            min_momentum: 0.0,
            max_momentum: 0.99,
            transform: None,
            trials: DEFAULT_TRIALS,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }
}

impl RangeArgs {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::InvalidRange(m));
        let (lo, hi) = (self.min_learning_rate, self.max_learning_rate);
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
            return bad(format!("learning rates must be positive and finite (got {lo}, {hi})"));
        }
        if lo > hi {
            return bad(format!("min_learning_rate {lo} exceeds max_learning_rate {hi}"));
        }
        if self.min_batch_binary_power > self.max_batch_binary_power {
            return bad(format!(
                "min_batch_binary_power {} exceeds max_batch_binary_power {}",
                self.min_batch_binary_power, self.max_batch_binary_power
            ));
        }
        if self.max_batch_binary_power > 62 {
            return bad("max_batch_binary_power must be at most 62".into());
        }
        let (mlo, mhi) = (self.min_momentum, self.max_momentum);
        if !(0.0..=1.0).contains(&mlo) || !(0.0..=1.0).contains(&mhi) {
            return bad(format!("momentum bounds must lie in [0, 1] (got {mlo}, {mhi})"));
        }
        if mlo > mhi {
            return bad(format!("min_momentum {mlo} exceeds max_momentum {mhi}"));
        }
        if let Some(t) = &self.transform {
            if !is_name_token(t) {
                return bad(format!("transform `{t}` is not a valid name"));
            }
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(1..=MAX_EPOCHS_LIMIT).contains(&self.max_epochs) {
            return bad(format!("max_epochs must lie in [1, {MAX_EPOCHS_LIMIT}] (got {})", self.max_epochs));
        }
        Ok(())
    }
}

/// Builds the four-parameter search space `{lr, batch, momentum, transform}`.
///
/// With no pinned transform, the categorical covers `registered_transforms`.
pub fn space_from_args(args: &RangeArgs, registered_transforms: &[String]) -> Result<SearchSpace, SpaceError> {
    let choices = match &args.transform {
        Some(t) => vec![t.clone()],
        None => {
            let mut c = registered_transforms.to_vec();
            c.sort();
            c.dedup();
            c
        }
    };
    let space = SearchSpace::new()
        .with("lr", ParamSpec::LogUniform { lo: args.min_learning_rate, hi: args.max_learning_rate })
        .with(
            "batch",
            ParamSpec::IntPow2 {
                min_power: args.min_batch_binary_power,
                max_power: args.max_batch_binary_power,
            },
        )
        .with("momentum", ParamSpec::Uniform { lo: args.min_momentum, hi: args.max_momentum })
        .with("transform", ParamSpec::Categorical { choices });
    space.validate()?;
    Ok(space)
}
