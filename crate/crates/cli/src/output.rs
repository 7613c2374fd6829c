//! Results documents and plot data.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Machine-readable record of one invocation. Floats are written in their
/// shortest round-trip form, so reading the document back is lossless.
#[derive(Debug, Serialize)]
pub struct ResultsDocument<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub inputs: Value,
    pub results: T,
}

impl<T: Serialize> ResultsDocument<T> {
    pub fn new(command: &'static str, seed: Option<u64>, inputs: Value, results: T) -> Self {
        Self { tool: "mvfdr", version: env!("CARGO_PKG_VERSION"), command, seed, inputs, results }
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Input(format!("cannot serialise results: {e}")))
    }

    pub fn write(&self, path: Option<&Path>) -> CliResult<()> {
        if let Some(path) = path {
            fs::write(path, self.to_json()?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Writes `x,y` rows with a header to `dir/name.csv`.
pub fn write_curve(dir: &Path, name: &str, header: (&str, &str), points: &[(f64, f64)]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record([header.0, header.1]).map_err(io)?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
