//! Shared input loading and output formatting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use survscore::{read_csv, validate, SurvivalDataset};

use crate::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn load_dataset(path: &Path) -> Result<SurvivalDataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let data = read_csv(file)?;
    validate(&data).into_result()?;
    Ok(data)
}

pub fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    let file = File::create(&path).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

/// `#` lines naming the library version and the resolved configuration.
pub fn write_header(w: &mut impl Write, config: &Value) -> std::io::Result<()> {
    writeln!(w, "# survscore {}", survscore::VERSION)?;
    writeln!(w, "# config {config}")
}

pub fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes a comma-separated row, quoting fields that need it.
pub fn write_row<S: AsRef<str>>(w: &mut impl Write, fields: &[S]) -> std::io::Result<()> {
    let cells: Vec<String> = fields
        .iter()
        .map(|f| {
            let f = f.as_ref();
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.to_string()
            }
        })
        .collect();
    writeln!(w, "{}", cells.join(","))
}
