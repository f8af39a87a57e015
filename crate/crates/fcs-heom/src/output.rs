//! CSV tables, metadata sidecars and basis dumps.

use std::fs;
use std::path::{Path, PathBuf};

use fcs_heom_core::correlation::ExpansionBasis;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::AppError;

/// A rectangular table of numbers with an optional leading text column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.12e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::Text(x.to_string())
    }
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Num(x) => *x,
                    Cell::Int(k) => *k as f64,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> Result<String, AppError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| AppError::Other(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| AppError::Other(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> AppError {
    AppError::Other(e.to_string())
}

/// Everything a run produces, written only after the run has finished.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub metadata: serde_json::Value,
    pub bases: Vec<ExpansionBasis>,
    pub checkpoint: Option<Vec<u8>>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    file: String,
    config_sha256: &'a str,
    convergence: &'a serde_json::Value,
    run: &'a serde_json::Value,
    version: &'static str,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes every table with a `<name>.meta.json` sidecar, the basis dump and
/// the checkpoint into `dir`.
pub fn write_artifacts(dir: &Path, config_text: &str, art: &Artifacts) -> Result<Vec<PathBuf>, AppError> {
    fs::create_dir_all(dir)?;
    let hash = sha256_hex(config_text);
    let convergence = art.metadata.get("convergence").cloned().unwrap_or(serde_json::Value::Null);
    let mut written = Vec::new();
    for t in &art.tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_csv()?)?;
        written.push(path);
        let side = Sidecar {
            file: format!("{}.csv", t.name),
            config_sha256: &hash,
            convergence: &convergence,
            run: &art.metadata,
            version: env!("CARGO_PKG_VERSION"),
        };
        let path = dir.join(format!("{}.meta.json", t.name));
        fs::write(&path, serde_json::to_string_pretty(&side).map_err(|e| AppError::Other(e.to_string()))?)?;
        written.push(path);
    }
    if !art.bases.is_empty() {
        let path = dir.join("basis.json");
        fs::write(&path, dump_bases(&art.bases)?)?;
        written.push(path);
    }
    if let Some(bytes) = &art.checkpoint {
        let path = dir.join("checkpoint.bin");
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Bases as JSON: exponents, closure matrix and counting tables per bath.
pub fn dump_bases(bases: &[ExpansionBasis]) -> Result<String, AppError> {
    serde_json::to_string_pretty(bases).map_err(|e| AppError::Other(e.to_string()))
}

pub fn load_bases(text: &str) -> Result<Vec<ExpansionBasis>, AppError> {
    serde_json::from_str(text).map_err(|e| AppError::Parse(e.to_string()))
}

/// Reads a CSV written by [`Table::to_csv`]. Non-numeric cells become text.
pub fn read_table(path: &Path) -> Result<Table, AppError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(
            rec.iter()
                .map(|s| s.parse::<f64>().map(Cell::Num).unwrap_or_else(|_| Cell::Text(s.to_string())))
                .collect(),
        );
    }
    Ok(Table { name, header, rows })
}
