//! Hyperparameter values and their canonical text forms.
//!
//! A hyperparameter map is hashed over its canonical JSON serialization:
//! keys sorted, reals in shortest round-trip decimal form, integers plain.
//! Identical maps therefore hash identically on every platform.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A single scalar hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrmValue {
    Int(i64),
    Real(f64),
    Token(String),
}

/// Hyperparameter map with lexicographically ordered keys.
pub type PrmMap = BTreeMap<String, PrmValue>;

impl PrmValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PrmValue::Int(v) => Some(*v as f64),
            PrmValue::Real(v) => Some(*v),
            PrmValue::Token(_) => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            PrmValue::Token(t) => Some(t),
            _ => None,
        }
    }

    /// Parses the cell text produced by `Display`.
    ///
    /// Integers are digit strings, reals always carry a `.` or an exponent,
    /// everything else is a token.
    pub fn parse_text(s: &str) -> PrmValue {
        if let Ok(v) = s.parse::<i64>() {
            return PrmValue::Int(v);
        }
        if s.contains(['.', 'e', 'E']) {
            if let Ok(v) = s.parse::<f64>() {
                if v.is_finite() {
                    return PrmValue::Real(v);
                }
            }
        }
        PrmValue::Token(s.to_owned())
    }
}

impl fmt::Display for PrmValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrmValue::Int(v) => write!(f, "{v}"),
            // serde_json renders reals through ryu: shortest round-trip, always
            // with a fractional part or exponent.
            PrmValue::Real(v) => f.write_str(&serde_json::to_string(v).map_err(|_| fmt::Error)?),
            PrmValue::Token(t) => f.write_str(t),
        }
    }
}

/// Returns true when a token can be stored and recovered unambiguously from
/// the `key=value;...` cell encoding.
pub fn is_storable_token(s: &str) -> bool {
    !s.is_empty()
        && !s.contains([';', '=', '\n', '\r'])
        && matches!(PrmValue::parse_text(s), PrmValue::Token(_))
}

/// Canonical JSON text of a map. Non-finite reals serialize as `null`.
pub fn canonical_json(prm: &PrmMap) -> String {
    serde_json::to_string(prm).expect("scalar map always serializes")
}

/// SHA-256 (lowercase hex) of the canonical JSON form.
pub fn prm_hash(prm: &PrmMap) -> String {
    hex::encode(Sha256::digest(canonical_json(prm).as_bytes()))
}

/// `key=value` pairs joined by `;`, keys sorted.
pub fn to_cell_text(prm: &PrmMap) -> String {
    prm.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`to_cell_text`]. Returns `None` on a pair without `=`.
pub fn from_cell_text(s: &str) -> Option<PrmMap> {
    if s.is_empty() {
        return Some(PrmMap::new());
    }
    s.split(';')
        .map(|pair| {
            let (k, v) = pair.split_once('=')?;
            Some((k.to_owned(), PrmValue::parse_text(v)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PrmMap {
        let mut m = PrmMap::new();
        m.insert("momentum".into(), PrmValue::Real(0.9));
        m.insert("batch".into(), PrmValue::Int(16));
        m.insert("lr".into(), PrmValue::Real(1.0));
        m.insert("transform".into(), PrmValue::Token("identity".into()));
        m
    }

    #[test]
    fn canonical_form_sorts_keys_and_keeps_real_marker() {
        assert_eq!(
            canonical_json(&sample()),
            r#"{"batch":16,"lr":1.0,"momentum":0.9,"transform":"identity"}"#
        );
    }

    #[test]
    fn hash_is_insertion_order_independent() {
        let mut other = PrmMap::new();
        other.insert("transform".into(), PrmValue::Token("identity".into()));
        other.insert("lr".into(), PrmValue::Real(1.0));
        other.insert("batch".into(), PrmValue::Int(16));
        other.insert("momentum".into(), PrmValue::Real(0.9));
        assert_eq!(prm_hash(&sample()), prm_hash(&other));
        assert_eq!(prm_hash(&sample()).len(), 64);
    }

    #[test]
    fn cell_text_round_trip() {
        let text = to_cell_text(&sample());
        assert_eq!(text, "batch=16;lr=1.0;momentum=0.9;transform=identity");
        assert_eq!(from_cell_text(&text).unwrap(), sample());
    }

    #[test]
    fn json_round_trip_preserves_int_real_split() {
        let json = canonical_json(&sample());
        let back: PrmMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn numeric_looking_tokens_are_not_storable() {
        assert!(is_storable_token("299x299"));
        assert!(!is_storable_token("12"));
        assert!(!is_storable_token("1e3"));
        assert!(!is_storable_token("a;b"));
    }
}
