//! Run directories, CSV tables and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Bumped whenever a CSV header or a JSON output layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Hash of everything that determines the outputs (not the thread count or
/// output location).
pub fn config_hash(config: &RunConfig) -> String {
    let key = json!({ "command": &config.command, "master_seed": config.master_seed });
    let digest = Sha256::digest(key.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A table with a fixed header; rows are written in order.
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &'static str, header: &[&'static str]) -> Self {
        Table { file, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Everything a command produces.
#[derive(Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub documents: Vec<(&'static str, Value)>,
    /// Short machine-readable result printed on standard output.
    pub summary: Value,
}

impl Artifacts {
    pub fn document(&mut self, file: &'static str, value: &impl Serialize) -> std::io::Result<()> {
        self.documents.push((file, serde_json::to_value(value)?));
        Ok(())
    }
}

/// Format a float so that it parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Written {
    pub run_dir: PathBuf,
    pub files: Vec<String>,
}

/// Write the artifacts and the manifest into `<output_dir>/<command>-<hash>`.
pub fn write_run(config: &RunConfig, artifacts: &Artifacts, threads: usize, wall_time: f64) -> std::io::Result<Written> {
    let hash = config_hash(config);
    let run_dir = config.output_dir.join(format!("{}-{hash}", config.command.label()));
    fs::create_dir_all(&run_dir)?;
    let mut files = Vec::new();
    let mut tables = Vec::new();
    for t in &artifacts.tables {
        write_csv(&run_dir.join(t.file), t)?;
        files.push(t.file.to_string());
        tables.push(json!({ "file": t.file, "header": t.header, "rows": t.rows.len() }));
    }
    for (file, value) in &artifacts.documents {
        write_json(&run_dir.join(file), value)?;
        files.push(file.to_string());
    }
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_hash": hash,
        "threads": threads,
        "tables": tables,
        "documents": artifacts.documents.iter().map(|(f, _)| f).collect::<Vec<_>>(),
        "wall_time_s": wall_time,
    });
    write_json(&run_dir.join("manifest.json"), &manifest)?;
    Ok(Written { run_dir, files })
}

fn write_csv(path: &Path, table: &Table) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()
}

fn write_json(path: &Path, value: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}
