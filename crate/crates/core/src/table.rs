//! Tab-separated tables with a version comment and a header row.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical and output bytes depend only on the values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::VERSION;

pub fn version_line() -> String {
    format!("# curvescope {VERSION}")
}

pub struct TableWriter {
    path: std::path::PathBuf,
    out: BufWriter<File>,
    sep: char,
}

impl TableWriter {
    pub fn create(path: &Path, columns: &[&str]) -> Result<Self> {
        Self::with_separator(path, columns, '\t')
    }

    pub fn with_separator(path: &Path, columns: &[&str], sep: char) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            sep,
        };
        w.line(&version_line())?;
        let header = columns.join(&sep.to_string());
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        let joined: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
        let s = joined.join(&self.sep.to_string());
        self.line(&s)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// A parsed table: header names and string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse::<f64>().map_err(|_| {
                    Error::Format(format!("row {}: column `{name}` is not a number: `{}`", i + 1, r[j]))
                })
            })
            .collect()
    }
}

/// Read a table, skipping `#` comment lines; the first other line is the header.
pub fn read_table(path: &Path, sep: char) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(sep).map(str::to_string).collect();
        match &columns {
            None => columns = Some(fields),
            Some(c) => {
                if fields.len() != c.len() {
                    return Err(Error::Format(format!(
                        "{}:{}: expected {} fields, found {}",
                        path.display(),
                        lineno + 1,
                        c.len(),
                        fields.len()
                    )));
                }
                rows.push(fields);
            }
        }
    }
    let columns = columns.ok_or_else(|| Error::Format(format!("{}: no header row", path.display())))?;
    Ok(Table { columns, rows })
}
