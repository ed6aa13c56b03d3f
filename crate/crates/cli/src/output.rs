//! CSV tables (RFC 4180, CRLF, 17 significant digits) and JSON sidecars with sorted keys.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{canonical_json, RunConfig};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.into())
    }
}

/// Finite floats carry 17 significant digits, enough to round-trip exactly.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

/// Tables and a JSON summary produced by one command.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub tables: Vec<Table>,
    pub summary: Value,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

pub fn table_file(command: &str, table: &str) -> String {
    format!("{command}_{table}.csv")
}

/// Writes `<command>_<table>.csv` for every table and the `<command>.json` sidecar.
pub fn write_report(dir: &Path, report: &Report, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &report.tables {
        let name = table_file(&report.command, &t.name);
        fs::write(dir.join(&name), t.to_csv()?)?;
        files.push(json!({ "file": name, "table": t.name, "columns": t.columns, "rows": t.rows.len() }));
    }
    let sidecar = json!({
        "schema_version": SCHEMA_VERSION,
        "command": report.command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "epsilon": cfg.epsilon,
        "tolerances": { "rtol": cfg.tolerances.rtol, "atol": cfg.tolerances.atol },
        "tables": files,
        "summary": report.summary,
        "generator": format!("naim {}", env!("CARGO_PKG_VERSION")),
    });
    fs::write(dir.join(format!("{}.json", report.command)), pretty_sorted(&sidecar))?;
    Ok(())
}

/// `error.json` with the error category and message.
pub fn write_error(dir: &Path, command: &str, hash: Option<&str>, err: &CliError) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let record = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": hash,
        "error": { "kind": err.kind(), "message": err.to_string() },
    });
    fs::write(dir.join("error.json"), pretty_sorted(&record))?;
    Ok(())
}

fn pretty_sorted(v: &Value) -> String {
    // re-read the canonical text so every level is a key-sorted map before pretty printing
    let sorted: Value = serde_json::from_str(&canonical_json(v)).expect("canonical json parses");
    let mut s = serde_json::to_string_pretty(&sorted).expect("json serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_crlf_with_full_precision() {
        let mut t = Table::new("t", vec!["a".into(), "name, quoted".into()]);
        t.push(vec![0.1.into(), "x\"y".into()]);
        t.push(vec![Cell::F(-1e-300), Cell::I(3)]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(text, "a,\"name, quoted\"\r\n1.0000000000000001e-1,\"x\"\"y\"\r\n-1.0000000000000000e-300,3\r\n");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }
}
