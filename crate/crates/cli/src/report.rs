//! Output files and console tables. Files keep full precision; tables
//! round to two decimals.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::args::OutputFormat;
use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
    pub format: OutputFormat,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, format: OutputFormat) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    fn write_with<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.root.join(name);
        let io_err = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut out)?;
        out.flush().map_err(io_err)?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            out.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn csv_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        self.write_with(name, |out| {
            let mut writer = csv::Writer::from_writer(out);
            for row in rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
            Ok(())
        })
    }

    pub fn raw<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        self.write_with(name, body)
    }

    /// Writes `rows` as `<stem>.csv` or `value` as `<stem>.json` depending on
    /// the chosen format.
    pub fn table<T: Serialize, R: Serialize>(
        &mut self,
        stem: &str,
        value: &T,
        rows: &[R],
    ) -> Result<(), CliError> {
        match self.format {
            OutputFormat::Csv => self.csv_rows(&format!("{stem}.csv"), rows),
            OutputFormat::Json => self.json(&format!("{stem}.json"), value),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Two-decimal display of an optional number.
pub fn fmt2(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "-".into(),
    }
}

/// Left-aligned first column, right-aligned others.
pub fn print_table(
    out: &mut dyn Write,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    let columns = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate().take(columns) {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}", w = widths[0]));
            } else {
                s.push_str(&format!("  {cell:>w$}", w = widths[i]));
            }
        }
        s
    };
    writeln!(out, "{}", line(header.to_vec()))?;
    for row in rows {
        writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
    }
    Ok(())
}

pub fn print_written(out: &mut dyn Write, dir: &OutputDir) -> std::io::Result<()> {
    for path in dir.written() {
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}
