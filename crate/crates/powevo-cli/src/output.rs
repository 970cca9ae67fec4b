//! Output plumbing: the versioned JSON envelope, the `--out`/`--quiet`
//! sink, and the CSV and table renderers.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;

use powevo::error::{Error, Result};

use crate::config::RunConfig;

/// Output format selected with the global `--output` flag. Every
/// subcommand has a natural default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

/// Where the primary payload goes and whether stderr notes are wanted.
pub struct Emitter {
    out: Option<PathBuf>,
    quiet: bool,
}

impl Emitter {
    pub fn new(out: Option<PathBuf>, quiet: bool) -> Self {
        Self { out, quiet }
    }

    /// Writes the primary output to `--out` or standard output.
    pub fn emit(&self, payload: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, payload)?,
            None => std::io::stdout().write_all(payload.as_bytes())?,
        }
        Ok(())
    }

    /// A stderr side note; silenced by `--quiet`.
    pub fn note(&self, line: &str) {
        if !self.quiet {
            eprintln!("{line}");
        }
    }

    /// Echoes the resolved config to stderr for non-JSON outputs, so the
    /// round-trip contract holds in every format.
    pub fn echo_config(&self, config: &RunConfig) -> Result<()> {
        if !self.quiet {
            self.note(&format!("resolved-config: {}", to_json_value(config)?));
        }
        Ok(())
    }
}

fn to_json_value<R: Serialize>(value: &R) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::numerical(format!("JSON serialization: {e}")))
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    resolved_config: Option<&'a RunConfig>,
    result: &'a R,
}

/// The versioned JSON envelope every JSON-mode command emits.
pub fn json_envelope<R: Serialize>(
    command: &str,
    config: Option<&RunConfig>,
    result: &R,
) -> Result<String> {
    let envelope = Envelope { schema_version: 1, command, resolved_config: config, result };
    let mut text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::numerical(format!("JSON serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Builds a CSV document from a header and stringified rows.
pub fn csv_document(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::numerical(format!("CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::numerical(format!("CSV encoding: {e}")))
}

/// Renders rows as an aligned text table: left-aligned first column,
/// right-aligned rest.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let columns = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut write_row = |cells: &[String]| {
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{:<width$}", cell, width = widths[i]);
            } else {
                let _ = write!(out, "{:>width$}", cell, width = widths[i]);
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
        let _ = columns;
    };
    write_row(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    for row in rows {
        write_row(row);
    }
    out
}

/// Fixed-width float formatting for tables and CSV cells.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Full-precision float formatting where round-trips matter.
pub fn full(v: f64) -> String {
    format!("{v}")
}
