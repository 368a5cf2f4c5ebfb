//! CSV and JSON output.
//!
//! CSV dialect: comma separated, LF line ends, UTF-8, no quoting. The first
//! line is `# schema=<kind>/v1`, the second the header.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::record::RunRecord;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(LabError::spec("format", format!("expected csv or json, got `{s}`"))),
        }
    }
}

pub fn csv_header(rec: &RunRecord) -> Vec<String> {
    let mut h = rec.columns.clone();
    h.extend(["mean", "std_error", "n_samples", "rejections"].map(String::from));
    h
}

pub fn write_csv<W: Write>(rec: &RunRecord, mut out: W) -> Result<()> {
    writeln!(out, "# schema={}/v{CSV_SCHEMA_VERSION}", rec.kind).map_err(|e| io_err("<csv>", e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(csv_header(rec))?;
    for p in &rec.points {
        let e = &p.estimate;
        let mut row: Vec<String> = p.grid.iter().map(|c| c.to_string()).collect();
        row.push(e.mean.0.to_string());
        row.push(e.std_error.0.to_string());
        row.push(e.n_samples.to_string());
        row.push(e.rejections.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| io_err("<csv>", e))?;
    Ok(())
}

pub fn to_csv_string(rec: &RunRecord) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rec, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn to_json_string(rec: &RunRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(rec)? + "\n")
}

pub fn from_json_str(text: &str) -> Result<RunRecord> {
    Ok(serde_json::from_str(text)?)
}

pub fn render(rec: &RunRecord, format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv_string(rec),
        Format::Json => to_json_string(rec),
    }
}

pub fn export(rec: &RunRecord, format: Format, path: &Path) -> Result<()> {
    let text = render(rec, format)?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_json_str(&text)
}

fn io_err(path: impl AsRef<Path>, source: std::io::Error) -> LabError {
    LabError::Io { path: path.as_ref().to_path_buf(), source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_record_is_header_only() {
        let rec = RunRecord::new("green-decay", json!({}), String::new(), &["x"]);
        assert_eq!(to_csv_string(&rec).unwrap(), "# schema=green-decay/v1\nx,mean,std_error,n_samples,rejections\n");
    }
}
