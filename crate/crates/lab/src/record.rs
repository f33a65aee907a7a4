//! JSON-lines run records and their CSV view.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::LabError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subcommand: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    /// Seconds; only filled in on request so that records stay reproducible.
    pub wall_time: Option<f64>,
    pub payload: Value,
}

impl RunRecord {
    pub fn to_line(&self) -> Result<String, LabError> {
        serde_json::to_string(self).map_err(|e| LabError::Io(e.to_string()))
    }

    pub fn parse_lines(text: &str) -> Result<Vec<RunRecord>, LabError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| LabError::Config(format!("record {}: {e}", i + 1))))
            .collect()
    }
}

/// A rectangular view of a payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| LabError::Io(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip form, the same digits serde_json writes; empty when not finite.
pub fn num(x: f64) -> String {
    serde_json::Number::from_f64(x).map_or_else(String::new, |n| n.to_string())
}
