//! Run reports: metric tables as CSV, loss traces, and a JSON summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use crate::formats::write_json;

/// A named table of already formatted cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }
}

/// Shortest text that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Everything one subcommand run produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub id: String,
    pub seed: u64,
    pub config_hash: String,
    pub tables: Vec<Table>,
    /// Per-epoch losses, written as two-column CSVs.
    pub traces: Vec<(String, Vec<f64>)>,
    /// Headline scalars repeated in the summary.
    pub values: BTreeMap<String, f64>,
    /// Files the run wrote besides the report itself.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage; kept out of the CSVs.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(id: &str, seed: u64, config_hash: &str) -> Self {
        Self { id: id.into(), seed, config_hash: config_hash.into(), ..Default::default() }
    }

    pub fn prefix(&self) -> String {
        format!("{}_seed{}", self.id, self.seed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub name: String,
    pub file: String,
    pub epochs: usize,
}

/// Contents of `{id}_seed{seed}_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub id: String,
    pub seed: u64,
    pub config_hash: String,
    pub tables: Vec<TableEntry>,
    pub traces: Vec<TraceEntry>,
    pub values: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub wall_clock_s: BTreeMap<String, f64>,
}

/// Writes `{prefix}_{table}.csv`, `{prefix}_{trace}_loss.csv` and
/// `{prefix}_summary.json` into `dir`; returns the paths written.
pub fn emit_report(report: &Report, dir: &Path) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let prefix = report.prefix();
    let mut written = Vec::new();
    let mut tables = Vec::new();
    for t in &report.tables {
        let file = format!("{prefix}_{}.csv", t.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| unwritable(&path, e))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        tables.push(TableEntry { name: t.name.clone(), file, rows: t.rows.len() });
        written.push(path);
    }
    let mut traces = Vec::new();
    for (name, losses) in &report.traces {
        let file = format!("{prefix}_{name}_loss.csv");
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| unwritable(&path, e))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in losses.iter().enumerate() {
            w.write_record([(e + 1).to_string(), num(*l)])?;
        }
        w.flush()?;
        traces.push(TraceEntry { name: name.clone(), file, epochs: losses.len() });
        written.push(path);
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        id: report.id.clone(),
        seed: report.seed,
        config_hash: report.config_hash.clone(),
        tables,
        traces,
        values: report.values.clone(),
        artifacts: report.artifacts.clone(),
        wall_clock_s: report.timings.clone(),
    };
    let path = dir.join(format!("{prefix}_summary.json"));
    write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}

fn unwritable(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::read_json;

    #[test]
    fn empty_report_has_zero_tables() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&Report::new("x", 3, "abc"), dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let s: Summary = read_json(&files[0]).unwrap();
        assert!(s.tables.is_empty() && s.traces.is_empty());
        assert_eq!((s.id.as_str(), s.seed, s.config_hash.as_str(), s.schema_version), ("x", 3, "abc", SCHEMA_VERSION));
    }

    #[test]
    fn tables_and_traces_match_memory() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("train", 1, "h");
        let mut t = Table::new("metrics", &["name", "value"]);
        t.push(vec!["a,b \"q\"".into(), num(0.1)]);
        t.push(vec!["c".into(), opt(None)]);
        r.tables.push(t);
        r.traces.push(("qstaformer".into(), vec![0.5, 0.25]));
        emit_report(&r, dir.path()).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("train_seed1_metrics.csv")).unwrap();
        let rows: Vec<Vec<String>> = rd.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
        assert_eq!(rows, r.tables[0].rows);
        let text = std::fs::read_to_string(dir.path().join("train_seed1_qstaformer_loss.csv")).unwrap();
        assert_eq!(text, "epoch,loss\n1,0.5\n2,0.25\n");
        let s: Summary = read_json(&dir.path().join("train_seed1_summary.json")).unwrap();
        assert_eq!(s.tables[0].rows, 2);
        assert_eq!(s.traces[0].epochs, 2);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "").unwrap();
        assert!(emit_report(&Report::new("x", 0, ""), &file.join("sub")).is_err());
    }
}
