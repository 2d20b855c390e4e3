//! Minimal SpreadsheetML writer: inline strings and numbers, no styles.

use std::collections::HashSet;
use std::io::{Seek, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;

use super::ReportError;
use crate::prm;
use crate::registry::{ResultRow, RESULT_COLUMNS};
use crate::stats::AggRow;

pub const MAX_SHEET_NAME: usize = 31;
/// Longest text a spreadsheet cell accepts.
const MAX_CELL_CHARS: usize = 32_767;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Number(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A named table: one header row followed by data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Sheet {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Sheet { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkbookMode {
    Aggregated,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkbookSpec {
    pub mode: WorkbookMode,
    pub sheets: Vec<Sheet>,
    /// SVG files written next to the workbook; listed on the "plots" sheet.
    pub plot_manifest: Vec<String>,
}

impl WorkbookSpec {
    /// "summary" sheet of aggregate rows.
    pub fn aggregated(rows: &[AggRow], plot_manifest: Vec<String>) -> Self {
        let mut s = Sheet::new("summary", &super::csv_io::AGG_COLUMNS);
        for a in rows {
            s.rows.push(vec![
                a.key.task.as_str().into(),
                a.key.dataset.as_str().into(),
                a.key.nn.as_str().into(),
                (a.key.epoch as f64).into(),
                (a.n as f64).into(),
                a.mean.into(),
                a.std.into(),
                a.mean_duration_ns.into(),
            ]);
        }
        WorkbookSpec { mode: WorkbookMode::Aggregated, sheets: vec![s], plot_manifest }
    }

    /// "raw" sheet of result rows.
    pub fn raw(rows: &[ResultRow], plot_manifest: Vec<String>) -> Self {
        let mut s = Sheet::new("raw", &RESULT_COLUMNS);
        for r in rows {
            s.rows.push(vec![
                r.task.as_str().into(),
                r.dataset.as_str().into(),
                r.metric.as_str().into(),
                r.metric_code.as_str().into(),
                r.nn.as_str().into(),
                r.nn_code.as_str().into(),
                (r.epoch as f64).into(),
                r.accuracy.into(),
                (r.duration as f64).into(),
                prm::to_cell_text(&r.prm).into(),
                r.transform_code.as_str().into(),
            ]);
        }
        WorkbookSpec { mode: WorkbookMode::Raw, sheets: vec![s], plot_manifest }
    }

    /// Data sheets followed by the plot manifest sheet.
    pub fn all_sheets(&self) -> Vec<Sheet> {
        let mut sheets = self.sheets.clone();
        let mut plots = Sheet::new("plots", &["file"]);
        plots.rows = self.plot_manifest.iter().map(|f| vec![Cell::Text(f.clone())]).collect();
        sheets.push(plots);
        sheets
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.sheets.iter().all(|s| s.rows.is_empty()) {
            return Err(ReportError::EmptyWorkbook);
        }
        let mut seen = HashSet::new();
        for s in self.all_sheets() {
            if s.name.is_empty() || s.name.chars().count() > MAX_SHEET_NAME {
                return Err(ReportError::InvalidWorkbook(format!("sheet name `{}` must have 1 to 31 characters", s.name)));
            }
            if s.name.contains(['[', ']', ':', '*', '?', '/', '\\']) {
                return Err(ReportError::InvalidWorkbook(format!("sheet name `{}` has a reserved character", s.name)));
            }
            if !seen.insert(s.name.to_lowercase()) {
                return Err(ReportError::InvalidWorkbook(format!("duplicate sheet name `{}`", s.name)));
            }
        }
        Ok(())
    }
}

fn xml_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars().take(MAX_CELL_CHARS) {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' | '\n' | '\r' => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{fffe}' || c == '\u{ffff}' => {}
            c => out.push(c),
        }
    }
    out
}

fn column_name(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

fn sheet_xml(s: &Sheet) -> String {
    let mut out = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<worksheet xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main"><sheetData>"#,
    );
    let header: Vec<Cell> = s.header.iter().map(|h| Cell::Text(h.clone())).collect();
    for (r, row) in std::iter::once(&header).chain(&s.rows).enumerate() {
        out.push_str(&format!(r#"<row r="{}">"#, r + 1));
        for (c, cell) in row.iter().enumerate() {
            let at = format!("{}{}", column_name(c), r + 1);
            match cell {
                Cell::Number(v) if v.is_finite() => out.push_str(&format!(r#"<c r="{at}"><v>{v}</v></c>"#)),
                Cell::Number(_) | Cell::Empty => {}
                Cell::Text(t) => out.push_str(&format!(
                    r#"<c r="{at}" t="inlineStr"><is><t xml:space="preserve">{}</t></is></c>"#,
                    xml_text(t)
                )),
            }
        }
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    out
}

fn write_package<W: Write + Seek>(sheets: &[Sheet], w: W) -> zip::result::ZipResult<W> {
    let mut z = zip::ZipWriter::new(w);
    let opts = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);

    let mut types = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/>"#,
    );
    for i in 1..=sheets.len() {
        types.push_str(&format!(
            r#"<Override PartName="/xl/worksheets/sheet{i}.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/>"#
        ));
    }
    types.push_str("</Types>");
    z.start_file("[Content_Types].xml", opts)?;
    z.write_all(types.as_bytes())?;

    z.start_file("_rels/.rels", opts)?;
    z.write_all(
        br#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" Target="xl/workbook.xml"/></Relationships>"#,
    )?;

    let mut book = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<workbook xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main" xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships"><sheets>"#,
    );
    let mut rels = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">"#,
    );
    for (i, s) in sheets.iter().enumerate() {
        let n = i + 1;
        book.push_str(&format!(r#"<sheet name="{}" sheetId="{n}" r:id="rId{n}"/>"#, xml_text(&s.name)));
        rels.push_str(&format!(
            r#"<Relationship Id="rId{n}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet{n}.xml"/>"#
        ));
    }
    book.push_str("</sheets></workbook>");
    rels.push_str("</Relationships>");
    z.start_file("xl/workbook.xml", opts)?;
    z.write_all(book.as_bytes())?;
    z.start_file("xl/_rels/workbook.xml.rels", opts)?;
    z.write_all(rels.as_bytes())?;

    for (i, s) in sheets.iter().enumerate() {
        z.start_file(format!("xl/worksheets/sheet{}.xml", i + 1), opts)?;
        z.write_all(sheet_xml(s).as_bytes())?;
    }
    z.finish()
}

/// Writes an XLSX workbook: the data sheets followed by the "plots" manifest.
pub fn export_workbook(spec: &WorkbookSpec, path: impl AsRef<Path>) -> Result<(), ReportError> {
    spec.validate()?;
    let sheets = spec.all_sheets();
    let mut buf = std::io::Cursor::new(Vec::new());
    write_package(&sheets, &mut buf).map_err(|e| match e {
        zip::result::ZipError::Io(io) => ReportError::Io(io),
        other => ReportError::Io(std::io::Error::other(other.to_string())),
    })?;
    std::fs::write(path, buf.into_inner())?;
    Ok(())
}
