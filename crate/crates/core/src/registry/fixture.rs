//! Read-only reference rows transcribed from published result tables.

use rusqlite::Transaction;
use serde::Deserialize;

use super::{insert_prm, insert_stats, lookup_code, upsert_code_tx, CodeKind, ConflictPolicy, EpochResult};
use super::{IngestReport, RegistryError, RowIds};
use crate::config::ConfigId;
use crate::metrics::builtin_metric_code;
use crate::prm::{PrmMap, PrmValue};

/// `prm_key` shared by all fixture rows.
pub const FIXTURE_PRM_KEY: &str = "published-fixture";
/// Transform name attached to fixture rows.
pub const FIXTURE_TRANSFORM: &str = "published-ref";

pub const REFERENCE_TABLES_JSON: &str = include_str!("../../../../fixtures/reference_tables.json");

const FIXTURE_TRANSFORM_CODE: &str = "reference transform published-ref: published result, preprocessing not recorded\n";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRow {
    pub task: String,
    pub dataset: String,
    pub metric: String,
    pub nn: String,
    pub value: f64,
    pub params_millions: f64,
    pub resolution: String,
}

impl FixtureRow {
    fn config(&self) -> Result<ConfigId, RegistryError> {
        ConfigId::new(&self.task, &self.dataset, &self.metric, &self.nn)
            .map_err(|e| RegistryError::MalformedFixture(format!("{}: {e}", self.nn)))
    }

    pub fn prm(&self) -> PrmMap {
        [
            ("params_millions".to_string(), PrmValue::Real(self.params_millions)),
            ("resolution".to_string(), PrmValue::Token(self.resolution.clone())),
        ]
        .into_iter()
        .collect()
    }
}

pub(super) fn parse(text: &str) -> Result<Vec<FixtureRow>, RegistryError> {
    let rows: Vec<FixtureRow> =
        serde_json::from_str(text).map_err(|e| RegistryError::MalformedFixture(e.to_string()))?;
    for r in &rows {
        r.config()?;
        if !(0.0..=1.0).contains(&r.value) {
            return Err(RegistryError::MalformedFixture(format!("{}: value {} outside [0, 1]", r.nn, r.value)));
        }
        if !r.params_millions.is_finite() || r.params_millions < 0.0 {
            return Err(RegistryError::MalformedFixture(format!("{}: bad params_millions", r.nn)));
        }
        if !crate::prm::is_storable_token(&r.resolution) {
            return Err(RegistryError::MalformedFixture(format!("{}: bad resolution `{}`", r.nn, r.resolution)));
        }
    }
    Ok(rows)
}

/// Reuses a registered entity of that name, else stores a placeholder.
fn resolve(tx: &Transaction, kind: CodeKind, name: &str, fallback: &str) -> Result<String, RegistryError> {
    if let Some(e) = lookup_code(tx, kind, "name", name)? {
        return Ok(e.id);
    }
    Ok(upsert_code_tx(tx, kind, name, fallback)?.id)
}

pub(super) fn ingest_row(tx: &Transaction, r: &FixtureRow) -> Result<IngestReport, RegistryError> {
    let config = r.config()?;
    let metric_code = builtin_metric_code(&r.metric)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("reference metric {}\n", r.metric));
    let ids = RowIds {
        metric: resolve(tx, CodeKind::Metric, &r.metric, &metric_code)?,
        nn: resolve(tx, CodeKind::Nn, &r.nn, &format!("reference model {}: published result, source not bundled\n", r.nn))?,
        transform: resolve(tx, CodeKind::Transform, FIXTURE_TRANSFORM, FIXTURE_TRANSFORM_CODE)?,
    };
    let prm_id = insert_prm(tx, &r.prm())?;
    let epoch = [EpochResult { epoch: 1, accuracy: r.value, duration_ns: 0 }];
    insert_stats(tx, &config, &ids, FIXTURE_PRM_KEY, &prm_id, &epoch, ConflictPolicy::Reject)
}
