//! `lemur`: run studies, manage the result store, and produce reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (bad config,
//! bad range, unknown plot kind), 3 plugin failed during the handshake.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lemur_core::config::{parse_config, space_from_args, ConfigError, RangeArgs, DEFAULT_MAX_EPOCHS, DEFAULT_TRIALS};
use lemur_core::harness::{
    run_study_with, serve, HarnessError, Launch, PluginDescriptor, ReferenceTrainer, StubTrainer, StudyRun,
    TrialReport, DEFAULT_TRANSFORM, REFERENCE_IN_SHAPE, REFERENCE_NN, REFERENCE_NN_CODE, REFERENCE_OUT_SHAPE,
};
use lemur_core::prm::to_cell_text;
use lemur_core::registry::{CodeKind, ConflictPolicy, IngestReport, QueryFilter, Registry, TrialDocument, FIXTURE_TRANSFORM};
use lemur_core::report::{
    export_workbook, plot_from_rows, render_svg, write_agg_csv, write_csv, PlotKind, WorkbookSpec,
};
use lemur_core::stats::{aggregate, pearson_matrix};

const BUILTIN_REFERENCE: &str = "builtin:reference";
const BUILTIN_STUB: &str = "builtin:stub";

#[derive(Parser)]
#[command(name = "lemur", version, about = "Neural network benchmarking: studies, result store, reports")]
struct Cli {
    /// Result store.
    #[arg(long, global = true, env = "LEMUR_DB", default_value = "lemur.db")]
    db: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a hyperparameter study for one config.
    Run(RunArgs),
    /// Store trial documents (JSON object or array; `-` reads stdin).
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Overwrite stored results that differ instead of failing.
        #[arg(long)]
        force: bool,
    },
    /// Load reference results (the bundled tables unless a file is given).
    Fixture {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Print stored results.
    Query {
        #[command(flatten)]
        filter: FilterArgs,
        /// Only the best row per (task, dataset, metric, nn).
        #[arg(long)]
        best: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Per-epoch aggregates and their correlations.
    Stats {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Render SVG plots.
    Plot {
        #[command(flatten)]
        filter: FilterArgs,
        /// A plot kind, or `all`.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an XLSX workbook, with plots in `<stem>_plots/` beside it.
    Export {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, value_enum, default_value_t = Mode::Aggregated)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the reference trainer over stdin/stdout.
    #[command(hide = true)]
    ServeReference {
        #[arg(long, default_value_t = 0)]
        epoch_delay_ms: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config as task_dataset_metric_nn.
    #[arg(short = 'c', long = "config")]
    config: String,
    #[arg(long = "min_learning_rate", default_value_t = RangeArgs::default().min_learning_rate)]
    min_learning_rate: f64,
    #[arg(long = "max_learning_rate", default_value_t = RangeArgs::default().max_learning_rate)]
    max_learning_rate: f64,
    #[arg(long = "min_batch_binary_power", default_value_t = RangeArgs::default().min_batch_binary_power)]
    min_batch_binary_power: u32,
    #[arg(long = "max_batch_binary_power", default_value_t = RangeArgs::default().max_batch_binary_power)]
    max_batch_binary_power: u32,
    #[arg(long = "min_momentum", default_value_t = RangeArgs::default().min_momentum)]
    min_momentum: f64,
    #[arg(long = "max_momentum", default_value_t = RangeArgs::default().max_momentum)]
    max_momentum: f64,
    /// Pin the transform instead of searching over registered ones.
    #[arg(long)]
    transform: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    epochs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `builtin:reference`, `builtin:stub`, or a command line to spawn.
    #[arg(long, default_value = BUILTIN_REFERENCE)]
    plugin: String,
    /// Model input shape, comma separated.
    #[arg(long, value_delimiter = ',')]
    in_shape: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    out_shape: Option<Vec<usize>>,
    /// Source file of the model, stored with the results.
    #[arg(long)]
    nn_code: Option<PathBuf>,
    #[arg(long, default_value = "cpu")]
    device: String,
    /// Seconds to wait for each plugin event.
    #[arg(long, default_value_t = 300)]
    epoch_timeout: u64,
    /// Defaults to `<db>.<config>.checkpoint.json`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Discard the checkpoint and start the study over.
    #[arg(long)]
    fresh: bool,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    nn: Option<String>,
}

impl FilterArgs {
    fn filter(&self) -> QueryFilter {
        QueryFilter {
            task: self.task.clone(),
            dataset: self.dataset.clone(),
            metric: self.metric.clone(),
            nn: self.nn.clone(),
            only_best_accuracy: false,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Aggregated,
    Raw,
}

/// Usage errors detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() || cause.is::<Usage>() {
            return 2;
        }
        if let Some(HarnessError::Handshake(_)) = cause.downcast_ref::<HarnessError>() {
            return 3;
        }
    }
    1
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let db = cli.db;
    match cli.command {
        Command::Run(args) => cmd_run(&db, args),
        Command::Ingest { files, force } => cmd_ingest(&db, &files, force),
        Command::Fixture { file } => cmd_fixture(&db, file.as_deref()),
        Command::Query { filter, best, format } => cmd_query(&db, &filter, best, format),
        Command::Stats { filter, format } => cmd_stats(&db, &filter, format),
        Command::Plot { filter, kind, out } => cmd_plot(&db, &filter, &kind, &out),
        Command::Export { filter, mode, out } => cmd_export(&db, &filter, mode, &out),
        Command::ServeReference { epoch_delay_ms } => {
            let mut trainer = ReferenceTrainer::default().with_epoch_delay(Duration::from_millis(epoch_delay_ms));
            serve(&mut trainer, io::stdin().lock(), io::stdout().lock())?;
            Ok(())
        }
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn open_existing(db: &Path) -> Result<Registry> {
    Registry::open_existing(db).with_context(|| format!("cannot open result store {}", db.display()))
}

fn default_checkpoint(db: &Path, config: &str) -> PathBuf {
    let mut name = db.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{config}.checkpoint.json"));
    db.with_file_name(name)
}

fn cmd_run(db: &Path, a: RunArgs) -> Result<()> {
    let config = parse_config(&a.config)?;
    let ranges = RangeArgs {
        min_learning_rate: a.min_learning_rate,
        max_learning_rate: a.max_learning_rate,
        min_batch_binary_power: a.min_batch_binary_power,
        max_batch_binary_power: a.max_batch_binary_power,
        min_momentum: a.min_momentum,
        max_momentum: a.max_momentum,
        transform: a.transform.clone(),
        trials: a.trials,
        max_epochs: a.epochs,
    };
    ranges.validate()?;

    let mut reg = Registry::open(db).with_context(|| format!("cannot open result store {}", db.display()))?;
    let mut transforms = vec![DEFAULT_TRANSFORM.to_string()];
    transforms.extend(reg.code_names(CodeKind::Transform)?.into_iter().filter(|t| t != FIXTURE_TRANSFORM));
    let space = space_from_args(&ranges, &transforms).map_err(|e| Usage(e.to_string()))?;

    let (launch, builtin_code) = match a.plugin.as_str() {
        BUILTIN_REFERENCE => {
            if config.nn != REFERENCE_NN {
                return Err(Usage(format!("{BUILTIN_REFERENCE} trains `{REFERENCE_NN}`, not `{}`", config.nn)).into());
            }
            (Launch::in_process("reference", ReferenceTrainer::default), Some(REFERENCE_NN_CODE.to_string()))
        }
        BUILTIN_STUB => (Launch::in_process("stub", StubTrainer::default), None),
        cmd => {
            let argv = shlex::split(cmd).filter(|v| !v.is_empty()).ok_or_else(|| Usage(format!("cannot parse plugin command `{cmd}`")))?;
            (Launch::Command(argv), None)
        }
    };
    let nn_code = match &a.nn_code {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?),
        None => builtin_code,
    };
    let plugin = PluginDescriptor {
        launch,
        nn_name: config.nn.clone(),
        in_shape: a.in_shape.unwrap_or_else(|| REFERENCE_IN_SHAPE.to_vec()),
        out_shape: a.out_shape.unwrap_or_else(|| REFERENCE_OUT_SHAPE.to_vec()),
        nn_code,
    };

    let checkpoint = a.checkpoint.unwrap_or_else(|| default_checkpoint(db, &a.config));
    if a.fresh && checkpoint.exists() {
        std::fs::remove_file(&checkpoint).with_context(|| format!("cannot remove {}", checkpoint.display()))?;
    }
    let mut run = StudyRun::new(config, space, plugin);
    run.trials = a.trials as usize;
    run.max_epochs = a.epochs;
    run.seed = a.seed;
    run.epoch_timeout = Duration::from_secs(a.epoch_timeout);
    run.checkpoint = Some(checkpoint);
    run.device = a.device;

    let total = run.trials;
    let summary = run_study_with(&run, &mut reg, |r| match r {
        TrialReport::Completed { index, prm, objective } => {
            eprintln!("trial {}/{total}: {objective:.4} [{}]", index + 1, to_cell_text(prm))
        }
        TrialReport::Reused { index, prm, objective } => {
            eprintln!("trial {}/{total}: {objective:.4} (stored) [{}]", index + 1, to_cell_text(prm))
        }
        TrialReport::Failed { index, prm, message, epochs } => {
            eprintln!("trial {}/{total}: failed after {epochs} epoch(s): {message} [{}]", index + 1, to_cell_text(prm))
        }
    })?;
    print_json(&summary)
}

fn read_documents(path: &Path) -> Result<Vec<TrialDocument>> {
    let text = if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        v => vec![v],
    };
    items
        .into_iter()
        .map(|v| Ok(TrialDocument::from_json(&v.to_string())?))
        .collect::<Result<_>>()
        .with_context(|| format!("in {}", path.display()))
}

fn cmd_ingest(db: &Path, files: &[PathBuf], force: bool) -> Result<()> {
    let mut reg = Registry::open(db)?;
    let policy = if force { ConflictPolicy::Overwrite } else { ConflictPolicy::Reject };
    let mut total = IngestReport::default();
    for f in files {
        for doc in read_documents(f)? {
            total += reg.ingest_trial(&doc, policy)?;
        }
    }
    print_json(&total)
}

fn cmd_fixture(db: &Path, file: Option<&Path>) -> Result<()> {
    let mut reg = Registry::open(db)?;
    let report = match file {
        Some(f) => reg.load_fixture(f)?,
        None => reg.load_bundled_fixture()?,
    };
    print_json(&report)
}

fn cmd_query(db: &Path, filter: &FilterArgs, best: bool, format: Format) -> Result<()> {
    let reg = open_existing(db)?;
    let mut f = filter.filter();
    f.only_best_accuracy = best;
    let rows = reg.query_data(&f)?;
    match format {
        Format::Json => print_json(&rows),
        Format::Csv => Ok(write_csv(&rows, io::stdout().lock())?),
    }
}

fn cmd_stats(db: &Path, filter: &FilterArgs, format: Format) -> Result<()> {
    let reg = open_existing(db)?;
    let agg = aggregate(&reg.query_data(&filter.filter())?);
    match format {
        Format::Csv => Ok(write_agg_csv(&agg, io::stdout().lock())?),
        Format::Json => {
            let correlation = if agg.len() >= 2 {
                let columns = vec![
                    ("epoch".to_string(), agg.iter().map(|a| a.key.epoch as f64).collect()),
                    ("accuracy_mean".to_string(), agg.iter().map(|a| a.mean).collect()),
                    ("accuracy_std".to_string(), agg.iter().map(|a| a.std).collect()),
                    ("duration_mean_ns".to_string(), agg.iter().map(|a| a.mean_duration_ns).collect()),
                ];
                Some(pearson_matrix(&columns)?)
            } else {
                None
            };
            print_json(&serde_json::json!({ "aggregate": agg, "correlation": correlation }))
        }
    }
}

/// Renders every requested kind that the rows support into `dir`.
fn write_plots(rows: &[lemur_core::registry::ResultRow], kinds: &[PlotKind], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    for &kind in kinds {
        let spec = match plot_from_rows(kind, rows) {
            Ok(s) => s,
            Err(e) if kinds.len() > 1 => {
                eprintln!("skipping {kind}: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let path = dir.join(format!("{kind}.svg"));
        std::fs::write(&path, render_svg(&spec)?).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn cmd_plot(db: &Path, filter: &FilterArgs, kind: &str, out: &Path) -> Result<()> {
    let kinds = if kind == "all" {
        PlotKind::ALL.to_vec()
    } else {
        vec![kind.parse::<PlotKind>().map_err(|e| Usage(e.to_string()))?]
    };
    let reg = open_existing(db)?;
    let rows = reg.query_data(&filter.filter())?;
    if rows.is_empty() {
        bail!("no stored results match the filter");
    }
    print_json(&write_plots(&rows, &kinds, out)?)
}

fn cmd_export(db: &Path, filter: &FilterArgs, mode: Mode, out: &Path) -> Result<()> {
    let reg = open_existing(db)?;
    let rows = reg.query_data(&filter.filter())?;
    if rows.is_empty() {
        bail!("no stored results match the filter");
    }
    let stem = out.file_stem().ok_or_else(|| anyhow!("--out needs a file name"))?.to_string_lossy();
    let plot_dir_name = format!("{stem}_plots");
    let plot_dir = out.with_file_name(&plot_dir_name);
    let plots = write_plots(&rows, &PlotKind::ALL, &plot_dir)?;
    let manifest: Vec<String> = plots
        .iter()
        .map(|p| format!("{plot_dir_name}/{}", p.file_name().unwrap().to_string_lossy()))
        .collect();
    let spec = match mode {
        Mode::Aggregated => WorkbookSpec::aggregated(&aggregate(&rows), manifest),
        Mode::Raw => WorkbookSpec::raw(&rows, manifest),
    };
    export_workbook(&spec, out)?;
    print_json(&serde_json::json!({ "workbook": out, "plots": plots }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn checkpoint_sits_beside_the_store() {
        assert_eq!(
            default_checkpoint(Path::new("/tmp/x/lemur.db"), "a_b_c_D"),
            Path::new("/tmp/x/lemur.db.a_b_c_D.checkpoint.json")
        );
    }

    #[test]
    fn exit_codes() {
        let usage: anyhow::Error = Usage("x".into()).into();
        assert_eq!(exit_code(&usage), 2);
        let cfg: anyhow::Error = parse_config("bad").unwrap_err().into();
        assert_eq!(exit_code(&cfg.context("while parsing")), 2);
        let hs: anyhow::Error = HarnessError::Handshake(Box::new(HarnessError::Spawn("x".into()))).into();
        assert_eq!(exit_code(&hs), 3);
        assert_eq!(exit_code(&anyhow!("other")), 1);
    }

    #[test]
    fn repeated_causes_are_printed_once() {
        let io = io::Error::new(io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(HarnessError::Io(io)).context("opening");
        assert_eq!(describe(&e), "opening: I/O error: gone");
    }
}
