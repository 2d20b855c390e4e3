use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::prm::{PrmMap, PrmValue};

/// Domain of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamSpec {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    IntPow2 { min_power: u32, max_power: u32 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("parameter `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("parameter `{0}` has no choices")]
    EmptyChoiceSet(String),
}

impl ParamSpec {
    pub fn validate(&self, name: &str) -> Result<(), SpaceError> {
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            name: name.to_owned(),
            reason: reason.to_owned(),
        };
        match self {
            ParamSpec::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || *lo <= 0.0 {
                    return Err(invalid("log-uniform bounds must be finite and positive"));
                }
                if lo > hi {
                    return Err(invalid("lower bound exceeds upper bound"));
                }
            }
            ParamSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(invalid("uniform bounds must be finite"));
                }
                if lo > hi {
                    return Err(invalid("lower bound exceeds upper bound"));
                }
            }
            ParamSpec::IntPow2 { min_power, max_power } => {
                if min_power > max_power {
                    return Err(invalid("minimum power exceeds maximum power"));
                }
                if *max_power > 62 {
                    return Err(invalid("power of two overflows a 64-bit integer"));
                }
            }
            ParamSpec::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(SpaceError::EmptyChoiceSet(name.to_owned()));
                }
            }
        }
        Ok(())
    }

    /// True when `value` lies in this domain.
    pub fn contains(&self, value: &PrmValue) -> bool {
        match (self, value) {
            (ParamSpec::LogUniform { lo, hi }, PrmValue::Real(v))
            | (ParamSpec::Uniform { lo, hi }, PrmValue::Real(v)) => *lo <= *v && *v <= *hi,
            (ParamSpec::IntPow2 { min_power, max_power }, PrmValue::Int(v)) => {
                *v > 0
                    && (*v as u64).is_power_of_two()
                    && (*min_power..=*max_power).contains(&(v.trailing_zeros()))
            }
            (ParamSpec::Categorical { choices }, PrmValue::Token(t)) => choices.contains(t),
            _ => false,
        }
    }

    /// The single admissible value, if the domain is pinned.
    pub fn pinned_value(&self) -> Option<PrmValue> {
        match self {
            ParamSpec::LogUniform { lo, hi } | ParamSpec::Uniform { lo, hi } if lo == hi => {
                Some(PrmValue::Real(*lo))
            }
            ParamSpec::IntPow2 { min_power, max_power } if min_power == max_power => {
                Some(PrmValue::Int(1i64 << min_power))
            }
            ParamSpec::Categorical { choices } if choices.len() == 1 => {
                Some(PrmValue::Token(choices[0].clone()))
            }
            _ => None,
        }
    }
}

/// Named, ordered collection of hyperparameter domains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    params: BTreeMap<String, ParamSpec>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, spec: ParamSpec) -> Self {
        self.insert(name, spec);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, spec: ParamSpec) {
        self.params.insert(name.into(), spec);
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<ParamSpec> {
        self.params.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamSpec)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        self.params.iter().try_for_each(|(n, s)| s.validate(n))
    }

    /// True when `prm` has exactly the space's keys and each value is in range.
    pub fn conforms(&self, prm: &PrmMap) -> bool {
        prm.len() == self.params.len()
            && self
                .params
                .iter()
                .all(|(n, s)| prm.get(n).is_some_and(|v| s.contains(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_pow2_membership() {
        let s = ParamSpec::IntPow2 { min_power: 1, max_power: 3 };
        assert!(s.contains(&PrmValue::Int(2)));
        assert!(s.contains(&PrmValue::Int(8)));
        assert!(!s.contains(&PrmValue::Int(1)));
        assert!(!s.contains(&PrmValue::Int(6)));
        assert!(!s.contains(&PrmValue::Real(4.0)));
    }

    #[test]
    fn pinned_domains_report_their_value() {
        let lr = ParamSpec::LogUniform { lo: 0.01, hi: 0.01 };
        assert_eq!(lr.pinned_value(), Some(PrmValue::Real(0.01)));
        assert_eq!(ParamSpec::Uniform { lo: 0.0, hi: 1.0 }.pinned_value(), None);
    }

    #[test]
    fn validation_rejects_bad_domains() {
        assert!(ParamSpec::LogUniform { lo: 0.0, hi: 1.0 }.validate("lr").is_err());
        assert!(ParamSpec::Uniform { lo: 1.0, hi: 0.0 }.validate("m").is_err());
        assert_eq!(
            ParamSpec::Categorical { choices: vec![] }.validate("t"),
            Err(SpaceError::EmptyChoiceSet("t".into()))
        );
    }

    #[test]
    fn checkpoint_form_is_tagged() {
        let s = SearchSpace::new().with("batch", ParamSpec::IntPow2 { min_power: 0, max_power: 3 });
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"batch":{"kind":"int_pow2","min_power":0,"max_power":3}}"#
        );
    }
}
