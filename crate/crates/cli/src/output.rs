use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every JSON document carries the tool version and the fully resolved config.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub result: &'a T,
}

pub fn to_json<T: Serialize>(command: &str, config: &RunConfig, result: &T) -> Result<String, CliError> {
    let envelope = Envelope { tool: "warpgreen", version: VERSION, command, config, result };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    Ok(text)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// A rectangular table destined for one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// Appended to the output file stem; empty for a single-table command.
    pub suffix: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(suffix: &str, header: &[&str]) -> Self {
        Self { suffix: suffix.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|x| format!("{x:?}")).collect());
    }

    pub fn push_labeled(&mut self, label: &str, values: &[f64]) {
        self.rows.push(std::iter::once(label.to_string()).chain(values.iter().map(|x| format!("{x:?}"))).collect());
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
    }
}

/// `tables.csv` with suffix `H` becomes `tables_H.csv`.
pub fn suffixed_path(path: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

/// Writes each table next to `path`, or prints them to stdout separated by
/// blank lines when there is no path.
pub fn emit_csv(path: Option<&Path>, tables: &[CsvTable]) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (k, table) in tables.iter().enumerate() {
        let bytes = table.to_csv()?;
        match path {
            Some(p) => {
                let target = suffixed_path(p, &table.suffix);
                write_atomic(&target, &bytes)?;
                written.push(target);
            }
            None => {
                let mut out = std::io::stdout().lock();
                if k > 0 {
                    out.write_all(b"\n")?;
                }
                out.write_all(&bytes)?;
            }
        }
    }
    Ok(written)
}

pub fn emit_json(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
