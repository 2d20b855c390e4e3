use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ConfigId;
use crate::prm::{self, PrmMap, PrmValue};

use super::RegistryError;

/// The three kinds of stored source artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Nn,
    Metric,
    Transform,
}

impl CodeKind {
    pub const ALL: [CodeKind; 3] = [CodeKind::Nn, CodeKind::Metric, CodeKind::Transform];

    /// Name of the backing table.
    pub fn table(self) -> &'static str {
        match self {
            CodeKind::Nn => "nn",
            CodeKind::Metric => "metric",
            CodeKind::Transform => "transform",
        }
    }
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.table())
    }
}

impl FromStr for CodeKind {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nn" => Ok(CodeKind::Nn),
            "metric" => Ok(CodeKind::Metric),
            "transform" => Ok(CodeKind::Transform),
            other => Err(RegistryError::InvalidDocument(format!("unknown code kind `{other}`"))),
        }
    }
}

/// A content-addressed source artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeEntity {
    pub kind: CodeKind,
    pub name: String,
    /// Normalized text; `id` is its SHA-256.
    pub code_text: String,
    pub id: String,
}

/// Strips trailing whitespace from every line and ends the text with exactly
/// one newline.
pub fn normalize_code(code: &str) -> String {
    let mut out: String = code.lines().map(|l| l.trim_end()).collect::<Vec<_>>().join("\n");
    let trimmed_len = out.trim_end_matches('\n').len();
    out.truncate(trimmed_len);
    out.push('\n');
    out
}

pub fn code_id(code: &str) -> String {
    hex::encode(Sha256::digest(normalize_code(code).as_bytes()))
}

/// One epoch of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochResult {
    pub epoch: u32,
    pub accuracy: f64,
    pub duration_ns: u64,
}

/// JSON interchange form of one optimization trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialDocument {
    pub config: ConfigId,
    pub transform: String,
    pub prm: PrmMap,
    pub epochs: Vec<EpochResult>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub codes: BTreeMap<CodeKind, String>,
}

impl TrialDocument {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |m: String| Err(RegistryError::InvalidDocument(m));
        if !crate::config::is_name_token(&self.transform) {
            return invalid(format!("transform `{}` is not a valid name", self.transform));
        }
        validate_prm(&self.prm)?;
        if self.epochs.is_empty() {
            return invalid("no epochs".into());
        }
        if self.epochs[0].epoch != 1 {
            return invalid(format!("epochs must start at 1, found {}", self.epochs[0].epoch));
        }
        if self.epochs.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return invalid("epoch numbers must be strictly increasing".into());
        }
        if let Some(e) = self.epochs.iter().find(|e| !(0.0..=1.0).contains(&e.accuracy)) {
            return invalid(format!("accuracy {} at epoch {} outside [0, 1]", e.accuracy, e.epoch));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let doc: TrialDocument =
            serde_json::from_str(text).map_err(|e| RegistryError::InvalidDocument(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

pub(crate) fn validate_prm(prm: &PrmMap) -> Result<(), RegistryError> {
    for (k, v) in prm {
        if k.is_empty() || k.contains(['=', ';', '\n', '\r']) {
            return Err(RegistryError::InvalidDocument(format!("illegal hyperparameter name `{k}`")));
        }
        match v {
            PrmValue::Real(x) if !x.is_finite() => {
                return Err(RegistryError::InvalidDocument(format!("hyperparameter `{k}` is not finite")))
            }
            PrmValue::Token(t) if !prm::is_storable_token(t) => {
                return Err(RegistryError::InvalidDocument(format!(
                    "hyperparameter `{k}` has an unstorable token `{t}`"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

pub const IDENTITY_TRANSFORM_CODE: &str = "builtin transform identity: inputs are passed through unchanged\n";

/// Code text the registry supplies when a document names a built-in
/// metric or the identity transform without giving its code.
pub fn builtin_code(kind: CodeKind, name: &str) -> Option<&'static str> {
    match kind {
        CodeKind::Metric => crate::metrics::builtin_metric_code(name),
        CodeKind::Transform if name == "identity" => Some(IDENTITY_TRANSFORM_CODE),
        _ => None,
    }
}

/// Outcome of ingesting one document or fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub inserted: usize,
    pub duplicates: usize,
    pub conflicts: usize,
}

impl std::ops::AddAssign for IngestReport {
    fn add_assign(&mut self, o: Self) {
        self.inserted += o.inserted;
        self.duplicates += o.duplicates;
        self.conflicts += o.conflicts;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictPolicy {
    #[default]
    Reject,
    Overwrite,
}

/// One row of the query API. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub dataset: String,
    pub metric: String,
    pub metric_code: String,
    pub nn: String,
    pub nn_code: String,
    pub epoch: u32,
    pub accuracy: f64,
    /// Per-epoch duration in nanoseconds.
    pub duration: u64,
    pub prm: PrmMap,
    pub transform_code: String,
}

pub const RESULT_COLUMNS: [&str; 11] = [
    "task",
    "dataset",
    "metric",
    "metric_code",
    "nn",
    "nn_code",
    "epoch",
    "accuracy",
    "duration",
    "prm",
    "transform_code",
];

/// A result row with the registry-internal fields needed for tie-breaking
/// and study bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRow {
    pub row: ResultRow,
    pub transform: String,
    pub prm_key: String,
}

/// Conjunctive equality filters for [`super::Registry::query_data`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryFilter {
    pub task: Option<String>,
    pub dataset: Option<String>,
    pub metric: Option<String>,
    pub nn: Option<String>,
    pub only_best_accuracy: bool,
}

impl QueryFilter {
    pub fn for_config(c: &ConfigId) -> Self {
        QueryFilter {
            task: Some(c.task.clone()),
            dataset: Some(c.dataset.clone()),
            metric: Some(c.metric.clone()),
            nn: Some(c.nn.clone()),
            only_best_accuracy: false,
        }
    }

    pub fn best(mut self) -> Self {
        self.only_best_accuracy = true;
        self
    }
}

/// Keeps, per (task, dataset, metric, nn), the row of maximal accuracy.
/// Ties go to the lower epoch, then the lexicographically lower prm key.
/// Output is ordered by group.
pub fn select_best<T>(items: Vec<T>, view: impl Fn(&T) -> (&ResultRow, &str)) -> Vec<T> {
    let mut best: BTreeMap<(String, String, String, String), T> = BTreeMap::new();
    for item in items {
        let (row, key) = view(&item);
        let group = (row.task.clone(), row.dataset.clone(), row.metric.clone(), row.nn.clone());
        let replace = match best.get(&group) {
            None => true,
            Some(cur) => {
                let (cur_row, cur_key) = view(cur);
                row.accuracy > cur_row.accuracy
                    || (row.accuracy == cur_row.accuracy
                        && (row.epoch, key) < (cur_row.epoch, cur_key))
            }
        };
        if replace {
            best.insert(group, item);
        }
    }
    best.into_values().collect()
}
