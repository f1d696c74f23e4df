use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands;
use crate::config::{Command, Format, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    pub results: Value,
    pub wall_time_seconds: f64,
}

impl RunReport {
    /// Runs the config, timing the command.
    pub fn run(config: &RunConfig) -> Result<Self, CliError> {
        let start = Instant::now();
        let results = commands::run(config)?;
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            results,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(self).expect("reports serialize") + "\n"),
            Format::Csv => self.csv(),
        }
    }

    fn csv(&self) -> Result<String, CliError> {
        match self.config.command()? {
            Command::Growth => Ok(growth_csv(&self.results)),
            Command::Conjugate => {
                let conj = &self.results["grid"]["conjugate"];
                let grid: hilbert_lab::fenchel::Conjugate = serde_json::from_value(conj.clone())
                    .map_err(|_| CliError::Config("csv output of `conjugate` needs a `grid`".into()))?;
                let mut out = String::from("node,value,extrapolated\n");
                for (i, (v, e)) in grid.grid.values().iter().zip(&grid.extrapolated).enumerate() {
                    writeln!(out, "{},{},{}", grid.grid.node(i), v, e).expect("writing to a String");
                }
                Ok(out)
            }
            _ => {
                let mut out = String::from("quantity,value\n");
                flatten("", &self.results, &mut out);
                Ok(out)
            }
        }
    }
}

fn growth_csv(results: &Value) -> String {
    let mut out = String::from("n,identity_ratio,searched_ratio,sqrt_ratio\n");
    for row in results["rows"].as_array().into_iter().flatten() {
        let cell = |key: &str| match &row[key] {
            Value::Null => String::new(),
            v => v.to_string(),
        };
        writeln!(out, "{},{},{},{}", cell("n"), cell("identity_ratio"), cell("searched_ratio"), cell("sqrt_ratio"))
            .expect("writing to a String");
    }
    out
}

/// One `path,value` row per scalar leaf, with dotted paths.
fn flatten(prefix: &str, value: &Value, out: &mut String) {
    let join = |key: &str| if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&join(k), v, out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&join(&i.to_string()), v, out)),
        Value::Null => writeln!(out, "{prefix},").expect("writing to a String"),
        Value::String(s) => writeln!(out, "{prefix},{s}").expect("writing to a String"),
        other => writeln!(out, "{prefix},{other}").expect("writing to a String"),
    }
}

/// Writes through a temporary file in the target directory, then renames it.
pub fn write_atomically(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
