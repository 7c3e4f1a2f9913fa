//! Versioned CSV tables and the timing sidecar.
//!
//! Every table starts with a `#minimax-csv,v1,<kind>` line followed by the
//! column header. Wall times never enter the tables, so a fixed seed gives
//! identical bytes; they go to a separate `timing.json`.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const SCHEMA_TAG: &str = "#minimax-csv";
pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self { kind: kind.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{SCHEMA_TAG},{SCHEMA_VERSION},{}\n", self.kind).into_bytes();
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
        drop(w);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))?;
        let (first, rest) = text.split_once('\n').ok_or_else(|| HarnessError::Csv("missing schema line".into()))?;
        let mut parts = first.trim_end_matches('\r').splitn(3, ',');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(SCHEMA_TAG), Some(SCHEMA_VERSION), Some(kind)) if !kind.is_empty() => {
                let mut r = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
                let columns: Vec<String> =
                    r.headers().map_err(|e| HarnessError::Csv(e.to_string()))?.iter().map(String::from).collect();
                let mut rows = Vec::new();
                for rec in r.records() {
                    let rec = rec.map_err(|e| HarnessError::Csv(e.to_string()))?;
                    rows.push(rec.iter().map(String::from).collect());
                }
                Ok(Self { kind: kind.into(), columns, rows })
            }
            _ => Err(HarnessError::Csv(format!("unsupported schema line {first:?}"))),
        }
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| HarnessError::Csv(format!("no column {name:?} in {}", self.kind)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HarnessError::io(path, e))
    }
}

/// Wall time per experiment cell.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub cells: Vec<(String, f64)>,
}

impl Timing {
    pub fn push(&mut self, label: String, d: Duration) {
        self.cells.push((label, d.as_secs_f64()));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).expect("timing is serializable");
        std::fs::write(path, s).map_err(|e| HarnessError::io(path, e))
    }
}
