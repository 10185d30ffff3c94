//! Comma-separated tables with a mandatory header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub struct Table {
    path: PathBuf,
    columns: Vec<usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

pub struct Row<'a> {
    table: &'a Table,
    line: usize,
    record: &'a csv::StringRecord,
}

/// Reads `path`, requiring every column in `required` to be present in the
/// header (in any order). Extra columns are ignored.
pub fn read_table(path: &Path, required: &[&str]) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    let mut columns = Vec::with_capacity(required.len());
    for name in required {
        let idx = header
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == *name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column {name:?}")))?;
        columns.push(idx);
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(Table {
        path: path.to_path_buf(),
        columns,
        rows,
    })
}

impl Table {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl Row<'_> {
    pub fn line(&self) -> usize {
        self.line
    }

    /// Field of the `i`-th required column.
    pub fn str(&self, i: usize) -> &str {
        self.record.get(self.table.columns[i]).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, i: usize, what: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(i);
        raw.parse::<T>()
            .map_err(|e| self.error(format!("bad {what} {raw:?}: {e}")))
    }

    pub fn nonempty(&self, i: usize, what: &str) -> Result<String> {
        let s = self.str(i);
        if s.is_empty() {
            return Err(self.error(format!("empty {what}")));
        }
        Ok(s.to_string())
    }

    pub fn flag(&self, i: usize, what: &str) -> Result<bool> {
        match self.str(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.error(format!("bad {what} {other:?}: expected 0 or 1"))),
        }
    }

    pub fn finite(&self, i: usize, what: &str) -> Result<f64> {
        let v: f64 = self.parse(i, what)?;
        if !v.is_finite() {
            return Err(self.error(format!("non-finite {what}")));
        }
        Ok(v)
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(&self.table.path, self.line, msg)
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

/// Writes a header plus rows; LF line endings with a trailing newline.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_rows(&mut out, header, rows).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rows<W, I>(out: W, header: &[&str], rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}
