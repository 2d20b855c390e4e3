use std::path::Path;
use std::process::{Command, Output};

use lemur_core::registry::Registry;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lemur");

fn lemur(db: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--db").arg(db).args(args).env_remove("LEMUR_DB").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn fixture_best_query() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("f.db");
    assert_eq!(json(&lemur(&db, &["fixture"]))["inserted"], 46);
    let rows = json(&lemur(&db, &["query", "--nn", "EfficientNet", "--best"]));
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["accuracy"], 0.9274);
    // loading again is a no-op
    assert_eq!(json(&lemur(&db, &["fixture"]))["duplicates"], 46);
}

#[test]
fn query_formats_and_missing_store() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("e.db");
    assert_eq!(code(&lemur(&db, &["query"])), 1);
    Registry::open(&db).unwrap();
    assert_eq!(json(&lemur(&db, &["query"])), Value::Array(vec![]));
    let csv = lemur(&db, &["query", "--format", "csv"]);
    assert_eq!(
        String::from_utf8(csv.stdout).unwrap(),
        "task,dataset,metric,metric_code,nn,nn_code,epoch,accuracy,duration,prm,transform_code\r\n"
    );
}

#[test]
fn db_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("env.db");
    let out = Command::new(BIN).arg("fixture").env("LEMUR_DB", &db).output().unwrap();
    assert!(out.status.success());
    assert!(db.exists());
}

#[test]
fn stub_study_then_plot_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("s.db");
    let out = lemur(&db, &["run", "-c", "img-classification_blobs_acc_Stub", "--plugin", "builtin:stub", "--trials", "3", "--epochs", "2"]);
    let summary = json(&out);
    assert_eq!(summary["completed"], 3);
    assert_eq!(summary["best_accuracy"], 0.5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial 3/3"));

    let plots = dir.path().join("plots");
    let files = json(&lemur(&db, &["plot", "--kind", "scatter_acc_epoch", "--out", plots.to_str().unwrap()]));
    assert_eq!(files.as_array().unwrap().len(), 1);
    assert_eq!(std::fs::read_dir(&plots).unwrap().count(), 1);

    let wb = dir.path().join("out.xlsx");
    let res = json(&lemur(&db, &["export", "--mode", "raw", "--out", wb.to_str().unwrap()]));
    assert_eq!(res["plots"].as_array().unwrap().len(), 9);
    let mut zip = zip::ZipArchive::new(std::fs::File::open(&wb).unwrap()).unwrap();
    let mut book = String::new();
    std::io::Read::read_to_string(&mut zip.by_name("xl/workbook.xml").unwrap(), &mut book).unwrap();
    assert!(book.contains(r#"<sheet name="raw""#) && book.contains(r#"<sheet name="plots""#));
    assert!(dir.path().join("out_plots/box_acc_epoch.svg").exists());

    let stats = json(&lemur(&db, &["stats"]));
    assert_eq!(stats["aggregate"].as_array().unwrap().len(), 2);
    assert_eq!(stats["aggregate"][0]["n"], 3);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("u.db");
    let bad = lemur(&db, &["run", "-c", "bad"]);
    assert_eq!(code(&bad), 2);
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("malformed config"));
    let range = ["run", "-c", "a_b_c_D", "--min_learning_rate", "0.1", "--max_learning_rate", "0.01"];
    assert_eq!(code(&lemur(&db, &range)), 2);
    assert_eq!(code(&lemur(&db, &["plot", "--kind", "pie", "--out", "x"])), 2);
    assert_eq!(code(&lemur(&db, &["query", "--format", "xml"])), 2);
}

#[test]
fn handshake_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("h.db");
    let out = lemur(&db, &["run", "-c", "a_b_c_D", "--plugin", "/nonexistent/trainer", "--trials", "1"]);
    assert_eq!(code(&out), 3);
    #[cfg(unix)]
    assert_eq!(code(&lemur(&db, &["run", "-c", "a_b_c_D", "--plugin", "sh -c 'echo nonsense'", "--trials", "1"])), 3);
}

#[test]
fn external_plugin_process() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("x.db");
    let plugin = format!("{BIN} serve-reference");
    let out = lemur(&db, &["run", "-c", "img-classification_blobs_acc_RefLinear", "--plugin", &plugin, "--trials", "2", "--epochs", "2"]);
    assert_eq!(json(&out)["completed"], 2);
    assert_eq!(json(&lemur(&db, &["query"])).as_array().unwrap().len(), 4);
}

#[test]
fn ingest_twice_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("i.db");
    let doc = serde_json::json!({
        "config": {"task": "img-classification", "dataset": "toy", "metric": "acc", "nn": "Tiny"},
        "transform": "identity",
        "prm": {"lr": 0.01, "batch": 16},
        "epochs": [{"epoch": 1, "accuracy": 0.4, "duration_ns": 100}, {"epoch": 2, "accuracy": 0.6, "duration_ns": 90}],
        "codes": {"nn": "class Tiny:\n    pass\n"}
    });
    let path = dir.path().join("doc.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(json(&lemur(&db, &["ingest", p]))["inserted"], 2);
    let again = json(&lemur(&db, &["ingest", p]));
    assert_eq!((again["inserted"].clone(), again["duplicates"].clone()), (0.into(), 2.into()));

    let mut changed = doc.clone();
    changed["epochs"][1]["accuracy"] = 0.7.into();
    std::fs::write(&path, Value::Array(vec![changed]).to_string()).unwrap();
    assert_eq!(code(&lemur(&db, &["ingest", p])), 1);
    assert_eq!(json(&lemur(&db, &["ingest", "--force", p]))["conflicts"], 1);
    let best = json(&lemur(&db, &["query", "--nn", "Tiny", "--best"]));
    assert_eq!(best[0]["accuracy"], 0.7);
}
