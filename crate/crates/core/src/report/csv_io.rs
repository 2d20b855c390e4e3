use std::io::{Read, Write};
use std::path::Path;

use super::ReportError;
use crate::prm;
use crate::registry::{ResultRow, RESULT_COLUMNS};
use crate::stats::AggRow;

pub const AGG_COLUMNS: [&str; 8] = ["task", "dataset", "nn", "epoch", "n", "mean", "std", "mean_duration_ns"];

fn csv_err(e: csv::Error) -> ReportError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ReportError::Io(io),
        other => ReportError::MalformedCsv(format!("{other:?}")),
    }
}

fn record(r: &ResultRow) -> [String; 11] {
    [
        r.task.clone(),
        r.dataset.clone(),
        r.metric.clone(),
        r.metric_code.clone(),
        r.nn.clone(),
        r.nn_code.clone(),
        r.epoch.to_string(),
        r.accuracy.to_string(),
        r.duration.to_string(),
        prm::to_cell_text(&r.prm),
        r.transform_code.clone(),
    ]
}

/// RFC-4180 CSV with the result columns as header.
pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), ReportError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    wr.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        wr.write_record(record(r)).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn export_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let f = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(f))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>, ReportError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RESULT_COLUMNS) {
        return Err(ReportError::MalformedCsv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |col: &str| ReportError::MalformedCsv(format!("record {}: bad `{col}`", line + 1));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(RESULT_COLUMNS[i]));
        out.push(ResultRow {
            task: rec[0].to_owned(),
            dataset: rec[1].to_owned(),
            metric: rec[2].to_owned(),
            metric_code: rec[3].to_owned(),
            nn: rec[4].to_owned(),
            nn_code: rec[5].to_owned(),
            epoch: rec[6].parse().map_err(|_| bad("epoch"))?,
            accuracy: num(7)?,
            duration: rec[8].parse().map_err(|_| bad("duration"))?,
            prm: prm::from_cell_text(&rec[9]).ok_or_else(|| bad("prm"))?,
            transform_code: rec[10].to_owned(),
        });
    }
    Ok(out)
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, ReportError> {
    read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_agg_csv<W: Write>(rows: &[AggRow], w: W) -> Result<(), ReportError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    wr.write_record(AGG_COLUMNS).map_err(csv_err)?;
    for a in rows {
        wr.write_record([
            a.key.task.clone(),
            a.key.dataset.clone(),
            a.key.nn.clone(),
            a.key.epoch.to_string(),
            a.n.to_string(),
            a.mean.to_string(),
            a.std.to_string(),
            a.mean_duration_ns.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
