use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::plugin::{restrict_space, Plugin, PluginDescriptor, TrainOutcome};
use super::protocol::TrainRequest;
use super::{HarnessError, DEFAULT_TRANSFORM, IDENTITY_TRANSFORM_CODE, TRANSFORM_PARAM};
use crate::config::{ConfigId, MAX_EPOCHS_LIMIT};
use crate::metrics::builtin_metric_code;
use crate::prm::{prm_hash, PrmMap, PrmValue};
use crate::registry::{
    select_best, CodeKind, ConflictPolicy, EpochResult, QueryFilter, Registry, StoredRow, TrialDocument,
};
use crate::tpe::{SearchSpace, StudyState};

pub const DEFAULT_EPOCH_TIMEOUT: Duration = Duration::from_secs(300);
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub config: ConfigId,
    pub space: SearchSpace,
    pub trials: usize,
    pub max_epochs: u32,
    pub seed: u64,
    pub plugin: PluginDescriptor,
    /// Longest wait for any single plugin event.
    pub epoch_timeout: Duration,
    /// Study state is saved here after every trial and resumed from if present.
    pub checkpoint: Option<PathBuf>,
    pub device: String,
}

impl StudyRun {
    pub fn new(config: ConfigId, space: SearchSpace, plugin: PluginDescriptor) -> Self {
        StudyRun {
            config,
            space,
            trials: crate::config::DEFAULT_TRIALS as usize,
            max_epochs: crate::config::DEFAULT_MAX_EPOCHS,
            seed: 0,
            plugin,
            epoch_timeout: DEFAULT_EPOCH_TIMEOUT,
            checkpoint: None,
            device: "cpu".into(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::InvalidRun(m));
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if !(1..=MAX_EPOCHS_LIMIT).contains(&self.max_epochs) {
            return invalid(format!("max_epochs must be in 1..={MAX_EPOCHS_LIMIT}, got {}", self.max_epochs));
        }
        if self.plugin.nn_name != self.config.nn {
            return invalid(format!("plugin serves `{}` but the config names `{}`", self.plugin.nn_name, self.config.nn));
        }
        self.space.validate().map_err(|e| HarnessError::InvalidRun(e.to_string()))?;
        self.plugin.validate()
    }
}

/// Persisted between trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ConfigId,
    pub max_epochs: u32,
    pub state: StudyState,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Option<Self>, HarnessError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let c: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Checkpoint(format!("{}: unsupported version {}", path.display(), c.version)));
        }
        Ok(Some(c))
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub completed: usize,
    pub failed: usize,
    pub best_prm: Option<PrmMap>,
    pub best_accuracy: Option<f64>,
}

/// Progress notification for one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialReport {
    Completed { index: usize, prm: PrmMap, objective: f64 },
    /// Results for this hyperparameter set were already stored.
    Reused { index: usize, prm: PrmMap, objective: f64 },
    Failed { index: usize, prm: PrmMap, message: String, epochs: usize },
}

pub fn transform_of(prm: &PrmMap) -> String {
    match prm.get(TRANSFORM_PARAM) {
        Some(PrmValue::Token(t)) => t.clone(),
        Some(other) => other.to_string(),
        None => DEFAULT_TRANSFORM.to_owned(),
    }
}

/// Code texts for entities the registry does not know yet.
fn missing_codes(reg: &Registry, run: &StudyRun, transform: &str) -> Result<BTreeMap<CodeKind, String>, HarnessError> {
    let mut codes = BTreeMap::new();
    if reg.code_by_name(CodeKind::Nn, &run.config.nn)?.is_none() {
        let text = run
            .plugin
            .nn_code
            .clone()
            .unwrap_or_else(|| format!("external plugin model {}\nlaunch: {}\n", run.config.nn, run.plugin.launch.describe()));
        codes.insert(CodeKind::Nn, text);
    }
    if reg.code_by_name(CodeKind::Metric, &run.config.metric)?.is_none() {
        if let Some(text) = builtin_metric_code(&run.config.metric) {
            codes.insert(CodeKind::Metric, text.to_owned());
        }
    }
    if transform == DEFAULT_TRANSFORM && reg.code_by_name(CodeKind::Transform, transform)?.is_none() {
        codes.insert(CodeKind::Transform, IDENTITY_TRANSFORM_CODE.to_owned());
    }
    Ok(codes)
}

fn document(run: &StudyRun, reg: &Registry, prm: &PrmMap, epochs: Vec<EpochResult>) -> Result<TrialDocument, HarnessError> {
    let transform = transform_of(prm);
    Ok(TrialDocument {
        config: run.config.clone(),
        codes: missing_codes(reg, run, &transform)?,
        transform,
        prm: prm.clone(),
        epochs,
    })
}

/// Trains one hyperparameter set and stores its epochs.
///
/// Completed epochs of a failed trial are stored as well and reported in
/// [`HarnessError::TrialFailed`]. A re-run of an already stored set replaces
/// the earlier measurements.
pub fn run_trial(run: &StudyRun, plugin: &mut Plugin, reg: &mut Registry, prm: &PrmMap) -> Result<TrialDocument, HarnessError> {
    let req = TrainRequest {
        config: run.config.clone(),
        prm: prm.clone(),
        max_epochs: run.max_epochs,
        in_shape: run.plugin.in_shape.clone(),
        out_shape: run.plugin.out_shape.clone(),
        device: run.device.clone(),
    };
    match plugin.train(&req)? {
        TrainOutcome::Done(epochs) => {
            let doc = document(run, reg, prm, epochs)?;
            reg.ingest_trial(&doc, ConflictPolicy::Overwrite)?;
            Ok(doc)
        }
        TrainOutcome::Failed { epochs, message, plugin_alive } => {
            let completed_epochs = epochs.len();
            if !epochs.is_empty() {
                let doc = document(run, reg, prm, epochs)?;
                reg.ingest_trial(&doc, ConflictPolicy::Overwrite)?;
            }
            Err(HarnessError::TrialFailed { message, completed_epochs, plugin_alive })
        }
    }
}

fn study_rows(reg: &Registry, config: &ConfigId) -> Result<Vec<StoredRow>, HarnessError> {
    Ok(reg.query_stored(&QueryFilter::for_config(config))?)
}

/// Final-epoch accuracy of a fully stored trial, if any.
fn stored_objective(reg: &Registry, run: &StudyRun, prm: &PrmMap) -> Result<Option<f64>, HarnessError> {
    let transform = transform_of(prm);
    let key = prm_hash(prm);
    let mut epochs: Vec<(u32, f64)> = study_rows(reg, &run.config)?
        .into_iter()
        .filter(|s| s.transform == transform && s.prm_key == key)
        .map(|s| (s.row.epoch, s.row.accuracy))
        .collect();
    epochs.sort_by_key(|e| e.0);
    let complete = epochs.len() == run.max_epochs as usize && epochs.iter().enumerate().all(|(i, e)| e.0 == i as u32 + 1);
    Ok(complete.then(|| epochs.last().expect("max_epochs >= 1").1))
}

fn connect(run: &StudyRun) -> Result<(Plugin, BTreeSet<String>), HarnessError> {
    let mut plugin = Plugin::spawn(&run.plugin.launch, run.epoch_timeout)?;
    let names = plugin.handshake()?;
    Ok((plugin, names))
}

fn initial_state(run: &StudyRun, space: SearchSpace) -> Result<StudyState, HarnessError> {
    let fresh = || StudyState::new(space.clone(), run.seed).map_err(|e| HarnessError::InvalidRun(e.to_string()));
    let Some(path) = &run.checkpoint else { return fresh() };
    let Some(c) = Checkpoint::load(path)? else { return fresh() };
    let mismatch = |what: &str| {
        Err(HarnessError::Checkpoint(format!(
            "{} belongs to a study with a different {what}; remove it to start over",
            path.display()
        )))
    };
    if c.config != run.config {
        return mismatch("config");
    }
    if c.max_epochs != run.max_epochs {
        return mismatch("epoch budget");
    }
    if c.state.seed != run.seed {
        return mismatch("seed");
    }
    if c.state.space != space {
        return mismatch("search space");
    }
    Ok(c.state)
}

pub fn run_study(run: &StudyRun, reg: &mut Registry) -> Result<StudySummary, HarnessError> {
    run_study_with(run, reg, |_| {})
}

/// Runs trials until `run.trials` have been issued, resuming from the
/// checkpoint when one exists. Errors other than per-trial failures abort
/// the study; the checkpoint then reflects the last finished trial.
pub fn run_study_with(
    run: &StudyRun,
    reg: &mut Registry,
    mut on_trial: impl FnMut(&TrialReport),
) -> Result<StudySummary, HarnessError> {
    run.validate()?;
    let handshake = |e: HarnessError| HarnessError::Handshake(Box::new(e));
    let (plugin, supported) = connect(run).map_err(handshake)?;
    let mut plugin = Some(plugin);
    let space = restrict_space(&run.space, &supported).map_err(handshake)?;
    let mut state = initial_state(run, space)?;

    while state.trials_issued() < run.trials {
        let index = state.trials_issued();
        let prm = state.suggest();
        if let Some(objective) = stored_objective(reg, run, &prm)? {
            state.observe(prm.clone(), objective)?;
            on_trial(&TrialReport::Reused { index, prm, objective });
        } else {
            let p = match &mut plugin {
                Some(p) => p,
                None => {
                    let (p, names) = connect(run)?;
                    if names != supported {
                        return Err(HarnessError::Protocol("restarted plugin reports different hyperparameters".into()));
                    }
                    plugin.insert(p)
                }
            };
            match run_trial(run, p, reg, &prm) {
                Ok(doc) => {
                    let objective = doc.epochs.last().expect("documents have epochs").accuracy;
                    state.observe(prm.clone(), objective)?;
                    on_trial(&TrialReport::Completed { index, prm, objective });
                }
                Err(HarnessError::TrialFailed { message, completed_epochs, plugin_alive }) => {
                    if !plugin_alive {
                        plugin = None;
                    }
                    state.record_failure(prm.clone());
                    on_trial(&TrialReport::Failed { index, prm, message, epochs: completed_epochs });
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(path) = &run.checkpoint {
            Checkpoint { version: CHECKPOINT_VERSION, config: run.config.clone(), max_epochs: run.max_epochs, state: state.clone() }
                .save(path)?;
        }
    }
    summarize(reg, run, &state)
}

/// Completed and failed counts plus the best stored row among this study's
/// hyperparameter sets.
pub fn summarize(reg: &Registry, run: &StudyRun, state: &StudyState) -> Result<StudySummary, HarnessError> {
    let keys: BTreeSet<(String, String)> = state
        .history()
        .iter()
        .map(|t| &t.prm)
        .chain(state.failed())
        .map(|p| (transform_of(p), prm_hash(p)))
        .collect();
    let rows: Vec<StoredRow> = study_rows(reg, &run.config)?
        .into_iter()
        .filter(|s| keys.contains(&(s.transform.clone(), s.prm_key.clone())))
        .collect();
    let best = select_best(rows, |s| (&s.row, s.prm_key.as_str())).into_iter().next();
    Ok(StudySummary {
        completed: state.history().len(),
        failed: state.failed().len(),
        best_accuracy: best.as_ref().map(|b| b.row.accuracy),
        best_prm: best.map(|b| b.row.prm),
    })
}
