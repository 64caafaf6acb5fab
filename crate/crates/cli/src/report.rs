//! Shared output plumbing: CSV, Markdown and file helpers.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Creates `dir` (and parents).
pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Serializes rows with RFC-4180 quoting into a string.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(Path::new("<csv>"), e))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    write_file(path, &csv_string(header, rows)?)
}

/// Full-precision, round-trippable number for CSV cells.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Fixed three-decimal number for Markdown tables.
pub fn md(v: f64) -> String {
    format!("{v:.3}")
}

/// Markdown document opening: title plus the resolved configuration.
pub fn md_header(title: &str, rc: &RunConfig) -> String {
    format!("# {title}\n\n## Configuration\n\n```text\n{}```\n\n", rc.to_text())
}

/// A pipe table.
pub fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", header.join(" | "));
    s.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

/// Writes the resolved configuration next to the other outputs.
pub fn write_run_config(out: &Path, rc: &RunConfig) -> CliResult<PathBuf> {
    let path = out.join(format!("{}.config.txt", rc.command));
    write_file(&path, &rc.to_text())?;
    Ok(path)
}

/// File stem used as the pair id.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Sorted files in `dir` with one of `exts` (case-insensitive).
pub fn list_files(dir: &Path, exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if path.is_file() && ok {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError {
            kind: crate::error::ErrorKind::Io,
            message: format!("{}: no {} files", dir.display(), exts.join("/")),
        });
    }
    Ok(out)
}
