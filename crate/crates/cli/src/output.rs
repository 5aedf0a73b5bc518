//! Output writers.
//!
//! JSON files are an envelope `{version, command, config, result}`. CSV files
//! start with two `#` comment lines carrying the version and the resolved
//! config (as one-line JSON), followed by a header row and the data. CSV
//! floats are written as `{:.16e}` (17 significant digits); JSON floats use
//! the shortest representation that round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, VERSION};

const CONFIG_PREFIX: &str = "# config: ";

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

pub fn json_string<T: Serialize>(command: &str, config: &RunConfig, result: &T) -> Result<String, CliError> {
    let env = Envelope { version: VERSION, command, config, result };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    file: &str,
    command: &str,
    config: &RunConfig,
    result: &T,
) -> Result<PathBuf, CliError> {
    let path = dir.join(file);
    fs::write(&path, json_string(command, config, result)?)?;
    Ok(path)
}

/// A CSV table: header plus pre-formatted rows.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, command: &str, config: &RunConfig) -> Result<String, CliError> {
        let mut buf = format!("# brw {VERSION} {command}\n{CONFIG_PREFIX}{}\n", serde_json::to_string(config)?)
            .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write(&self, dir: &Path, file: &str, command: &str, config: &RunConfig) -> Result<PathBuf, CliError> {
        let path = dir.join(file);
        fs::write(&path, self.to_csv(command, config)?)?;
        Ok(path)
    }
}

/// Recovers the config embedded in a JSON or CSV output.
pub fn embedded_config(text: &str) -> Result<RunConfig, CliError> {
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix(CONFIG_PREFIX)) {
        return Ok(serde_json::from_str(line)?);
    }
    let v: serde_json::Value = serde_json::from_str(text)?;
    Ok(serde_json::from_value(v["config"].clone())?)
}
