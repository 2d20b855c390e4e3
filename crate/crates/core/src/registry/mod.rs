//! Single-file SQLite store of trials, code artifacts and hyperparameters.
//!
//! Tables:
//! - `nn`, `metric`, `transform`: content-addressed code (`id` = SHA-256 of
//!   the normalized text), unique by name and by id.
//! - `prm`: hyperparameter sets keyed by the hash of their canonical JSON.
//! - `stat`: one row per (task, dataset, metric, nn, transform, prm, epoch)
//!   holding accuracy and per-epoch duration in nanoseconds.
//!
//! `stat.prm_key` is the deduplication key and normally equals `prm_id`;
//! reference rows loaded from a fixture carry the sentinel
//! [`FIXTURE_PRM_KEY`] instead.
//!
//! A [`Registry`] owns one connection. Writes take `&mut self`, so one
//! handle is one writer; open more handles for concurrent readers.

mod fixture;
mod types;

use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Transaction};

pub use fixture::{FixtureRow, FIXTURE_PRM_KEY, FIXTURE_TRANSFORM, REFERENCE_TABLES_JSON};
pub use types::{
    builtin_code, code_id, normalize_code, select_best, CodeEntity, CodeKind, ConflictPolicy, EpochResult, IngestReport,
    QueryFilter, ResultRow, StoredRow, TrialDocument, IDENTITY_TRANSFORM_CODE, RESULT_COLUMNS,
};

use crate::config::{is_name_token, ConfigId};
use crate::prm::{self, PrmMap};

const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE nn (
    id   TEXT PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    code TEXT NOT NULL
);
CREATE TABLE metric (
    id   TEXT PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    code TEXT NOT NULL
);
CREATE TABLE transform (
    id   TEXT PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    code TEXT NOT NULL
);
CREATE TABLE prm (
    id    TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE stat (
    task         TEXT NOT NULL,
    dataset      TEXT NOT NULL,
    metric_id    TEXT NOT NULL REFERENCES metric(id),
    nn_id        TEXT NOT NULL REFERENCES nn(id),
    transform_id TEXT NOT NULL REFERENCES transform(id),
    prm_key      TEXT NOT NULL,
    prm_id       TEXT NOT NULL REFERENCES prm(id),
    epoch        INTEGER NOT NULL CHECK (epoch >= 1),
    accuracy     REAL NOT NULL CHECK (accuracy >= 0.0 AND accuracy <= 1.0),
    duration     INTEGER NOT NULL CHECK (duration >= 0),
    PRIMARY KEY (task, dataset, metric_id, nn_id, transform_id, prm_key, epoch)
);
CREATE INDEX stat_task_dataset ON stat (task, dataset);
CREATE INDEX stat_nn ON stat (nn_id);
";

const EXPECTED_COLUMNS: [(&str, &[&str]); 5] = [
    ("nn", &["id", "name", "code"]),
    ("metric", &["id", "name", "code"]),
    ("transform", &["id", "name", "code"]),
    ("prm", &["id", "value"]),
    (
        "stat",
        &[
            "task",
            "dataset",
            "metric_id",
            "nn_id",
            "transform_id",
            "prm_key",
            "prm_id",
            "epoch",
            "accuracy",
            "duration",
        ],
    ),
];

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry is corrupt or has an unexpected schema: {0}")]
    CorruptStore(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{kind} `{name}` already exists with different code")]
    NameCollision { kind: CodeKind, name: String },
    #[error("{kind} `{name}` is not registered and no code was provided")]
    UnknownCode { kind: CodeKind, name: String },
    #[error("conflicting result for {config} epoch {epoch}: stored accuracy {stored_accuracy} / duration {stored_duration}, new accuracy {new_accuracy} / duration {new_duration}")]
    Conflict {
        config: String,
        epoch: u32,
        stored_accuracy: f64,
        stored_duration: u64,
        new_accuracy: f64,
        new_duration: u64,
    },
    #[error("{kind} `{name}` is referenced by stored results")]
    InUse { kind: CodeKind, name: String },
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("invalid trial document: {0}")]
    InvalidDocument(String),
    #[error("malformed fixture: {0}")]
    MalformedFixture(String),
    #[error("database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
}

fn is_corruption(e: &rusqlite::Error) -> bool {
    matches!(
        e.sqlite_error_code(),
        Some(rusqlite::ErrorCode::NotADatabase) | Some(rusqlite::ErrorCode::DatabaseCorrupt)
    )
}

fn corrupt(e: rusqlite::Error) -> RegistryError {
    if is_corruption(&e) {
        RegistryError::CorruptStore(e.to_string())
    } else {
        RegistryError::Sqlite(e)
    }
}

/// Handle to an open registry file.
pub struct Registry {
    conn: Connection,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("path", &self.conn.path()).finish()
    }
}

impl Registry {
    /// Opens `path`, creating the file and schema when absent.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(RegistryError::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("directory {} does not exist", parent.display()),
                )));
            }
        }
        let conn = Connection::open(path).map_err(corrupt)?;
        Self::init(conn)
    }

    /// Opens an existing registry without creating it.
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(RegistryError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("registry {} does not exist", path.display()),
            )));
        }
        Self::open(path)
    }

    /// A private in-memory registry, mostly for tests.
    pub fn open_in_memory() -> Result<Self, RegistryError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, RegistryError> {
        conn.busy_timeout(std::time::Duration::from_secs(30))?;
        conn.execute_batch("PRAGMA foreign_keys = ON;").map_err(corrupt)?;
        let version: i64 = conn.query_row("PRAGMA user_version", [], |r| r.get(0)).map_err(corrupt)?;
        let table_count: i64 = conn
            .query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get(0))
            .map_err(corrupt)?;

        if version == 0 && table_count == 0 {
            conn.execute_batch(&format!("BEGIN; {SCHEMA} PRAGMA user_version = {SCHEMA_VERSION}; COMMIT;"))
                .map_err(corrupt)?;
        } else if version != SCHEMA_VERSION {
            return Err(RegistryError::CorruptStore(format!(
                "schema version {version}, expected {SCHEMA_VERSION}"
            )));
        }

        let check: String = conn.query_row("PRAGMA quick_check", [], |r| r.get(0)).map_err(corrupt)?;
        if check != "ok" {
            return Err(RegistryError::CorruptStore(check));
        }
        for (table, expected) in EXPECTED_COLUMNS {
            let mut stmt = conn.prepare(&format!("PRAGMA table_info({table})"))?;
            let cols: Vec<String> = stmt.query_map([], |r| r.get(1))?.collect::<Result<_, _>>()?;
            if cols != expected {
                return Err(RegistryError::CorruptStore(format!(
                    "table `{table}` has columns {cols:?}, expected {expected:?}"
                )));
            }
        }
        Ok(Registry { conn })
    }

    /// Inserts code, or returns the existing entity with identical text.
    ///
    /// An empty name is replaced by `<kind>-<first 8 hex of the id>`.
    pub fn upsert_code(&mut self, kind: CodeKind, name: &str, code_text: &str) -> Result<CodeEntity, RegistryError> {
        let tx = self.conn.transaction()?;
        let entity = upsert_code_tx(&tx, kind, name, code_text)?;
        tx.commit()?;
        Ok(entity)
    }

    pub fn code_by_name(&self, kind: CodeKind, name: &str) -> Result<Option<CodeEntity>, RegistryError> {
        lookup_code(&self.conn, kind, "name", name)
    }

    pub fn code_names(&self, kind: CodeKind) -> Result<Vec<String>, RegistryError> {
        let mut stmt = self.conn.prepare(&format!("SELECT name FROM {} ORDER BY name", kind.table()))?;
        let names = stmt.query_map([], |r| r.get(0))?.collect::<Result<_, _>>()?;
        Ok(names)
    }

    /// Deletes a code entity; rejected while any result references it.
    pub fn delete_code(&mut self, kind: CodeKind, name: &str) -> Result<bool, RegistryError> {
        match self.conn.execute(&format!("DELETE FROM {} WHERE name = ?1", kind.table()), [name]) {
            Ok(n) => Ok(n > 0),
            Err(e) if e.sqlite_error_code() == Some(rusqlite::ErrorCode::ConstraintViolation) => {
                Err(RegistryError::InUse { kind, name: name.to_owned() })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Stores one trial document atomically: either every epoch row is
    /// accounted for or nothing changes.
    pub fn ingest_trial(&mut self, doc: &TrialDocument, policy: ConflictPolicy) -> Result<IngestReport, RegistryError> {
        doc.validate()?;
        let tx = self.conn.transaction()?;
        let resolve = |tx: &Transaction, kind: CodeKind, name: &str| -> Result<CodeEntity, RegistryError> {
            match doc.codes.get(&kind) {
                Some(text) => {
                    let e = upsert_code_tx(tx, kind, name, text)?;
                    if e.name != name {
                        // Content addressing maps this code to a differently named entity.
                        return Err(RegistryError::NameCollision { kind, name: name.to_owned() });
                    }
                    Ok(e)
                }
                None => match (lookup_code(tx, kind, "name", name)?, builtin_code(kind, name)) {
                    (Some(e), _) => Ok(e),
                    (None, Some(text)) => upsert_code_tx(tx, kind, name, text),
                    (None, None) => Err(RegistryError::UnknownCode { kind, name: name.to_owned() }),
                },
            }
        };
        let ids = RowIds {
            metric: resolve(&tx, CodeKind::Metric, &doc.config.metric)?.id,
            nn: resolve(&tx, CodeKind::Nn, &doc.config.nn)?.id,
            transform: resolve(&tx, CodeKind::Transform, &doc.transform)?.id,
        };
        let prm_id = insert_prm(&tx, &doc.prm)?;
        let report = insert_stats(&tx, &doc.config, &ids, &prm_id, &prm_id, &doc.epochs, policy)?;
        tx.commit()?;
        Ok(report)
    }

    /// Loads reference rows from fixture JSON text.
    pub fn load_fixture_json(&mut self, text: &str) -> Result<IngestReport, RegistryError> {
        let rows = fixture::parse(text)?;
        let tx = self.conn.transaction()?;
        let mut report = IngestReport::default();
        for r in &rows {
            report += fixture::ingest_row(&tx, r)?;
        }
        tx.commit()?;
        Ok(report)
    }

    pub fn load_fixture(&mut self, path: impl AsRef<Path>) -> Result<IngestReport, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        self.load_fixture_json(&text)
    }

    /// Loads the bundled transcription of the published result tables.
    pub fn load_bundled_fixture(&mut self) -> Result<IngestReport, RegistryError> {
        self.load_fixture_json(REFERENCE_TABLES_JSON)
    }

    /// Rows matching `filter`, joined with their code text.
    pub fn query_data(&self, filter: &QueryFilter) -> Result<Vec<ResultRow>, RegistryError> {
        Ok(self.query_stored(filter)?.into_iter().map(|s| s.row).collect())
    }

    /// Like [`Registry::query_data`] but keeps the transform name and prm key.
    pub fn query_stored(&self, filter: &QueryFilter) -> Result<Vec<StoredRow>, RegistryError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT s.task, s.dataset, m.name, m.code, n.name, n.code, s.epoch, s.accuracy, s.duration,
                    p.value, t.code, t.name, s.prm_key
             FROM stat s
             JOIN metric m ON m.id = s.metric_id
             JOIN nn n ON n.id = s.nn_id
             JOIN transform t ON t.id = s.transform_id
             JOIN prm p ON p.id = s.prm_id
             WHERE (?1 IS NULL OR s.task = ?1)
               AND (?2 IS NULL OR s.dataset = ?2)
               AND (?3 IS NULL OR m.name = ?3)
               AND (?4 IS NULL OR n.name = ?4)
             ORDER BY s.task, s.dataset, m.name, n.name, t.name, s.prm_key, s.epoch",
        )?;
        let rows = stmt
            .query_map(params![filter.task, filter.dataset, filter.metric, filter.nn], |r| {
                let prm_text: String = r.get(9)?;
                Ok((
                    ResultRow {
                        task: r.get(0)?,
                        dataset: r.get(1)?,
                        metric: r.get(2)?,
                        metric_code: r.get(3)?,
                        nn: r.get(4)?,
                        nn_code: r.get(5)?,
                        epoch: r.get(6)?,
                        accuracy: r.get(7)?,
                        duration: r.get::<_, i64>(8)? as u64,
                        prm: PrmMap::new(),
                        transform_code: r.get(10)?,
                    },
                    prm_text,
                    r.get::<_, String>(11)?,
                    r.get::<_, String>(12)?,
                ))
            })?
            .map(|res| {
                let (mut row, prm_text, transform, prm_key) = res?;
                row.prm = serde_json::from_str(&prm_text)
                    .map_err(|e| RegistryError::CorruptStore(format!("unreadable prm `{prm_text}`: {e}")))?;
                Ok(StoredRow { row, transform, prm_key })
            })
            .collect::<Result<Vec<_>, RegistryError>>()?;
        if filter.only_best_accuracy {
            Ok(select_best(rows, |s| (&s.row, s.prm_key.as_str())))
        } else {
            Ok(rows)
        }
    }

    pub fn stat_count(&self) -> Result<usize, RegistryError> {
        let n: i64 = self.conn.query_row("SELECT count(*) FROM stat", [], |r| r.get(0))?;
        Ok(n as usize)
    }
}

struct RowIds {
    metric: String,
    nn: String,
    transform: String,
}

fn lookup_code(conn: &Connection, kind: CodeKind, column: &str, value: &str) -> Result<Option<CodeEntity>, RegistryError> {
    let sql = format!("SELECT id, name, code FROM {} WHERE {column} = ?1", kind.table());
    Ok(conn
        .query_row(&sql, [value], |r| {
            Ok(CodeEntity { kind, id: r.get(0)?, name: r.get(1)?, code_text: r.get(2)? })
        })
        .optional()?)
}

fn upsert_code_tx(tx: &Transaction, kind: CodeKind, name: &str, code_text: &str) -> Result<CodeEntity, RegistryError> {
    let code_text = normalize_code(code_text);
    let id = code_id(&code_text);
    if let Some(existing) = lookup_code(tx, kind, "id", &id)? {
        return Ok(existing);
    }
    let name = if name.is_empty() { format!("{kind}-{}", &id[..8]) } else { name.to_owned() };
    if !is_name_token(&name) {
        return Err(RegistryError::InvalidName(name));
    }
    if lookup_code(tx, kind, "name", &name)?.is_some() {
        return Err(RegistryError::NameCollision { kind, name });
    }
    tx.execute(
        &format!("INSERT INTO {} (id, name, code) VALUES (?1, ?2, ?3)", kind.table()),
        params![id, name, code_text],
    )?;
    Ok(CodeEntity { kind, name, code_text, id })
}

fn insert_prm(tx: &Transaction, prm: &PrmMap) -> Result<String, RegistryError> {
    let id = prm::prm_hash(prm);
    tx.execute(
        "INSERT OR IGNORE INTO prm (id, value) VALUES (?1, ?2)",
        params![id, prm::canonical_json(prm)],
    )?;
    Ok(id)
}

fn insert_stats(
    tx: &Transaction,
    config: &ConfigId,
    ids: &RowIds,
    prm_key: &str,
    prm_id: &str,
    epochs: &[EpochResult],
    policy: ConflictPolicy,
) -> Result<IngestReport, RegistryError> {
    let mut report = IngestReport::default();
    let mut select = tx.prepare_cached(
        "SELECT accuracy, duration FROM stat
         WHERE task = ?1 AND dataset = ?2 AND metric_id = ?3 AND nn_id = ?4
           AND transform_id = ?5 AND prm_key = ?6 AND epoch = ?7",
    )?;
    for e in epochs {
        let key = params![config.task, config.dataset, ids.metric, ids.nn, ids.transform, prm_key, e.epoch];
        let stored: Option<(f64, i64)> = select.query_row(key, |r| Ok((r.get(0)?, r.get(1)?))).optional()?;
        match stored {
            None => {
                tx.execute(
                    "INSERT INTO stat (task, dataset, metric_id, nn_id, transform_id, prm_key, prm_id, epoch, accuracy, duration)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
                    params![
                        config.task,
                        config.dataset,
                        ids.metric,
                        ids.nn,
                        ids.transform,
                        prm_key,
                        prm_id,
                        e.epoch,
                        e.accuracy,
                        e.duration_ns as i64
                    ],
                )?;
                report.inserted += 1;
            }
            Some((acc, dur)) if acc == e.accuracy && dur as u64 == e.duration_ns => report.duplicates += 1,
            Some((acc, dur)) => match policy {
                ConflictPolicy::Reject => {
                    return Err(RegistryError::Conflict {
                        config: config.to_string(),
                        epoch: e.epoch,
                        stored_accuracy: acc,
                        stored_duration: dur as u64,
                        new_accuracy: e.accuracy,
                        new_duration: e.duration_ns,
                    })
                }
                ConflictPolicy::Overwrite => {
                    tx.execute(
                        "UPDATE stat SET accuracy = ?8, duration = ?9, prm_id = ?10
                         WHERE task = ?1 AND dataset = ?2 AND metric_id = ?3 AND nn_id = ?4
                           AND transform_id = ?5 AND prm_key = ?6 AND epoch = ?7",
                        params![
                            config.task,
                            config.dataset,
                            ids.metric,
                            ids.nn,
                            ids.transform,
                            prm_key,
                            e.epoch,
                            e.accuracy,
                            e.duration_ns as i64,
                            prm_id
                        ],
                    )?;
                    report.conflicts += 1;
                }
            },
        }
    }
    Ok(report)
}
