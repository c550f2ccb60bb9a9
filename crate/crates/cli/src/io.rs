//! CSV formats read and written by the command-line tool.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fdx::distributions::StepCdf;
use fdx::fisher::FisherTable;

use crate::CliError;

fn reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::Data(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr)
}

// Every record with its 1-based line number.
fn records(path: &Path, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, CliError> {
    let mut rdr = reader(path, expected)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn row_error(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64, CliError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| row_error(path, line, format!("invalid {what} `{field}`")))
}

/// `id,<value>` files: p-values and weights.
pub fn read_values(path: &Path, column: &str) -> Result<(Vec<String>, Vec<f64>), CliError> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in records(path, &["id", column])? {
        ids.push(rec[0].to_string());
        values.push(parse_f64(path, line, &rec[1], column)?);
    }
    Ok((ids, values))
}

pub struct CountRow {
    pub id: String,
    pub table: FisherTable,
}

pub fn read_counts(path: &Path) -> Result<Vec<CountRow>, CliError> {
    records(path, &["id", "x1", "n1", "x2", "n2"])?
        .into_iter()
        .map(|(line, rec)| {
            let mut n = [0u64; 4];
            for (slot, field) in n.iter_mut().zip(rec.iter().skip(1)) {
                *slot = field
                    .parse()
                    .map_err(|_| row_error(path, line, format!("invalid count `{field}`")))?;
            }
            let table = FisherTable::from_counts(n[0], n[1], n[2], n[3]).map_err(|e| row_error(path, line, e))?;
            Ok(CountRow {
                id: rec[0].to_string(),
                table,
            })
        })
        .collect()
}

fn parse_list(path: &Path, line: u64, field: &str, what: &str) -> Result<Vec<f64>, CliError> {
    field
        .split(';')
        .map(|v| parse_f64(path, line, v.trim(), what))
        .collect()
}

pub fn read_cdfs(path: &Path) -> Result<(Vec<String>, Vec<StepCdf>), CliError> {
    let mut ids = Vec::new();
    let mut cdfs = Vec::new();
    for (line, rec) in records(path, &["id", "support", "cum"])? {
        let support = parse_list(path, line, &rec[1], "support point")?;
        let cum = parse_list(path, line, &rec[2], "cumulative value")?;
        ids.push(rec[0].to_string());
        cdfs.push(StepCdf::new(support, cum).map_err(|e| row_error(path, line, e))?);
    }
    Ok((ids, cdfs))
}

pub fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub fn write_row<W: Write>(w: &mut csv::Writer<W>, row: &[String]) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| CliError::Data(e.to_string()))
}

pub fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}
